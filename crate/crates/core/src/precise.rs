//! Double-double arithmetic and an extended-precision evaluation of the
//! training objective.
//!
//! Central differences taken on an `f64` loss bottom out at roughly
//! `ulp(loss) / eps` of absolute noise, which swamps small gradient
//! components. Re-evaluating the loss with ~106 significant bits pushes that
//! floor far below anything the gradient checker cares about.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::Result;
use crate::memory::{CLASSIFIER_BIAS, CLASSIFIER_WEIGHT, EMBEDDING, SIMILARITY};
use crate::numeric::ParamStore;
use crate::objective::PROB_CLAMP;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const SPLITTER: f64 = 134_217_729.0;
const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn split(a: f64) -> (f64, f64) {
    let t = SPLITTER * a;
    let hi = t - (t - a);
    (hi, a - hi)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    (p, ((ah * bh - p) + ah * bl + al * bh) + al * bl)
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn ldexp(self, k: i32) -> Dd {
        let s = 2f64.powi(k);
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    fn square(self) -> Dd {
        self * self
    }

    pub fn exp(self) -> Dd {
        if self.hi > 709.0 {
            return Dd::from_f64(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * Dd::from_f64(k)).ldexp(-9);
        // Taylor series on |r| < 7e-4, then undo the 2^-9 scaling by squaring.
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for n in 1..=12 {
            term = term * r / Dd::from_f64(n as f64);
            sum = sum + term;
        }
        for _ in 0..9 {
            sum = sum.square();
        }
        sum.ldexp(k as i32)
    }

    pub fn ln(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::from_f64(f64::NAN);
        }
        let mut y = Dd::from_f64(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Dd::ONE;
        }
        y
    }

    pub fn sigmoid(self) -> Dd {
        if self.hi >= 0.0 {
            Dd::ONE / (Dd::ONE + (-self).exp())
        } else {
            let e = self.exp();
            e / (Dd::ONE + e)
        }
    }

    pub fn max(self, other: Dd) -> Dd {
        if (self - other).hi >= 0.0 {
            self
        } else {
            other
        }
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Dd {
        if self.hi < lo {
            Dd::from_f64(lo)
        } else if self.hi > hi || (self.hi == hi && self.lo > 0.0) {
            Dd::from_f64(hi)
        } else {
            self
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let (hi, lo) = quick_two_sum(p, e + (self.hi * b.lo + self.lo * b.hi));
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * Dd::from_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Dd::from_f64(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from_f64(q3)
    }
}

/// Everything the loss needs besides the parameters, in index form.
pub(crate) struct LossProblem<'a> {
    pub query_tokens: &'a [usize],
    pub slot_tokens: Vec<Vec<usize>>,
    /// Fixed slot vectors used instead of `slot_tokens` when memory is frozen.
    pub frozen_slots: Option<Vec<Vec<f64>>>,
    pub unfair: bool,
    /// Slot indices of (targets, non-targets); `None` disables the margin term.
    pub pairs: Option<(Vec<usize>, Vec<usize>)>,
    pub gamma: f64,
    pub lambda: f64,
}

fn mean_rows(emb: &[f64], dim: usize, rows: &[usize]) -> Vec<Dd> {
    let mut out = vec![Dd::ZERO; dim];
    if rows.is_empty() {
        return out;
    }
    for &r in rows {
        for (o, &v) in out.iter_mut().zip(&emb[r * dim..(r + 1) * dim]) {
            *o = *o + Dd::from_f64(v);
        }
    }
    let n = Dd::from_f64(rows.len() as f64);
    out.into_iter().map(|o| o / n).collect()
}

/// Total loss of one sample evaluated in double-double precision.
pub(crate) fn total_loss_dd(params: &ParamStore, problem: &LossProblem<'_>) -> Result<Dd> {
    let emb = params.matrix(EMBEDDING)?;
    let w = params.matrix(SIMILARITY)?;
    let a = params.vector(CLASSIFIER_WEIGHT)?.as_slice();
    let b = params.vector(CLASSIFIER_BIAS)?.as_slice()[0];
    let d = emb.cols();

    let q = mean_rows(emb.as_slice(), d, problem.query_tokens);
    let slots: Vec<Vec<Dd>> = match &problem.frozen_slots {
        Some(fixed) => fixed
            .iter()
            .map(|v| v.iter().map(|&x| Dd::from_f64(x)).collect())
            .collect(),
        None => problem
            .slot_tokens
            .iter()
            .map(|t| mean_rows(emb.as_slice(), d, t))
            .collect(),
    };

    let mut qw = vec![Dd::ZERO; d];
    for (r, &qr) in q.iter().enumerate() {
        for (acc, &wrc) in qw.iter_mut().zip(w.row(r)) {
            *acc = *acc + qr * Dd::from_f64(wrc);
        }
    }
    let gates: Vec<Dd> = slots
        .iter()
        .map(|m| {
            qw.iter()
                .zip(m)
                .fold(Dd::ZERO, |s, (&x, &y)| s + x * y)
                .sigmoid()
        })
        .collect();

    let mut z = Dd::from_f64(b);
    for (k, &qk) in q.iter().enumerate() {
        z = z + Dd::from_f64(a[k]) * qk;
    }
    for k in 0..d {
        let mut ck = Dd::ZERO;
        for (g, m) in gates.iter().zip(&slots) {
            ck = ck + *g * m[k];
        }
        z = z + Dd::from_f64(a[d + k]) * ck;
    }
    let p = z.sigmoid().clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let cls = if problem.unfair {
        -p.ln()
    } else {
        -(Dd::ONE - p).ln()
    };

    let ss = match &problem.pairs {
        Some((pos, neg)) if problem.unfair && problem.lambda != 0.0 => {
            let gamma = Dd::from_f64(problem.gamma);
            let mut sum = Dd::ZERO;
            for &i in pos {
                for &j in neg {
                    sum = sum + (gamma - gates[i] + gates[j]).max(Dd::ZERO);
                }
            }
            sum / Dd::from_f64((pos.len() * neg.len()) as f64)
        }
        _ => Dd::ZERO,
    };
    Ok(cls + Dd::from_f64(problem.lambda) * ss)
}
