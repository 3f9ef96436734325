//! Dense 64-bit vectors and matrices, named parameter storage, and the
//! scalar nonlinearity used by the gates and the classifier.
//!
//! Everything here is deliberately small: the model is a single-hop memory
//! network whose gradients are derived by hand in [`crate::trainer`], so no
//! tensor library or autodiff graph is needed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::precise::Dd;

/// Logistic function, evaluated without overflow for any finite input.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inner product of two equal-length slices, summed left to right.
pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            op: "dot",
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Dense vector with at least one entry, all finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vec64(Vec<f64>);

impl Vec64 {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidShape("vector of dimension 0".into()));
        }
        check_finite(&values, "vector")?;
        Ok(Vec64(values))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "vector dimension must be positive");
        Vec64(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Vec64) -> Result<f64> {
        dot(&self.0, &other.0)
    }

    pub fn scale(&self, alpha: f64) -> Vec64 {
        Vec64(self.0.iter().map(|v| v * alpha).collect())
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Vec64) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                op: "axpy",
                left: self.dim(),
                right: other.dim(),
            });
        }
        for (s, o) in self.0.iter_mut().zip(&other.0) {
            *s += alpha * o;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl AsRef<[f64]> for Vec64 {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat64 {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Mat64 {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidShape(format!("matrix {rows}x{cols}")));
        }
        if values.len() != rows * cols {
            return Err(Error::InvalidShape(format!(
                "matrix {rows}x{cols} given {} values",
                values.len()
            )));
        }
        check_finite(&values, "matrix")?;
        Ok(Mat64 { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Mat64 {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat64::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · v`
    pub fn mat_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                op: "mat_vec",
                left: self.cols,
                right: v.len(),
            });
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `selfᵀ · v`
    pub fn mat_t_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::DimensionMismatch {
                op: "mat_t_vec",
                left: self.rows,
                right: v.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a * vr;
            }
        }
        Ok(out)
    }
}

/// One named slot in a [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Param {
    Vector(Vec64),
    Matrix(Mat64),
}

impl Param {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Param::Vector(v) => (1, v.dim()),
            Param::Matrix(m) => (m.rows(), m.cols()),
        }
    }

    pub fn len(&self) -> usize {
        self.as_slice().len()
    }

    pub fn is_empty(&self) -> bool {
        self.as_slice().is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            Param::Vector(v) => v.as_slice(),
            Param::Matrix(m) => m.as_slice(),
        }
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        match self {
            Param::Vector(v) => v.as_mut_slice(),
            Param::Matrix(m) => m.as_mut_slice(),
        }
    }

    /// Same kind and shape, all zeros.
    pub fn zeros_like(&self) -> Param {
        match self {
            Param::Vector(v) => Param::Vector(Vec64::zeros(v.dim())),
            Param::Matrix(m) => Param::Matrix(Mat64::zeros(m.rows(), m.cols())),
        }
    }
}

/// Ordered, named parameter tensors. Iteration follows insertion order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamStore {
    slots: Vec<(String, Param)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, param: Param) -> Result<()> {
        let name = name.into();
        if self.slots.iter().any(|(n, _)| *n == name) {
            return Err(Error::InvalidArgument(format!(
                "duplicate parameter name `{name}`"
            )));
        }
        self.slots.push((name, param));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.slots.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.slots
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p)
    }

    pub fn matrix(&self, name: &str) -> Result<&Mat64> {
        match self.get(name) {
            Some(Param::Matrix(m)) => Ok(m),
            _ => Err(Error::UnknownParameter(name.to_string())),
        }
    }

    pub fn matrix_mut(&mut self, name: &str) -> Result<&mut Mat64> {
        match self.get_mut(name) {
            Some(Param::Matrix(m)) => Ok(m),
            _ => Err(Error::UnknownParameter(name.to_string())),
        }
    }

    pub fn vector(&self, name: &str) -> Result<&Vec64> {
        match self.get(name) {
            Some(Param::Vector(v)) => Ok(v),
            _ => Err(Error::UnknownParameter(name.to_string())),
        }
    }

    pub fn vector_mut(&mut self, name: &str) -> Result<&mut Vec64> {
        match self.get_mut(name) {
            Some(Param::Vector(v)) => Ok(v),
            _ => Err(Error::UnknownParameter(name.to_string())),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.slots.iter().map(|(n, p)| (n.as_str(), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.slots.iter_mut().map(|(n, p)| (n.as_str(), p))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Total number of scalar entries across all slots.
    pub fn scalar_count(&self) -> usize {
        self.slots.iter().map(|(_, p)| p.len()).sum()
    }

    pub fn zeros_like(&self) -> ParamStore {
        ParamStore {
            slots: self
                .slots
                .iter()
                .map(|(n, p)| (n.clone(), p.zeros_like()))
                .collect(),
        }
    }

    /// True when both stores hold the same names, in the same order, with the same shapes.
    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.slots.len() == other.slots.len()
            && self
                .slots
                .iter()
                .zip(&other.slots)
                .all(|((a, pa), (b, pb))| a == b && pa.shape() == pb.shape())
    }

    pub fn all_finite(&self) -> bool {
        self.slots
            .iter()
            .all(|(_, p)| p.as_slice().iter().all(|v| v.is_finite()))
    }

    /// `self += alpha * other`, slot by slot.
    pub fn add_scaled(&mut self, alpha: f64, other: &ParamStore) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::InvalidShape("parameter layouts differ".into()));
        }
        for ((_, a), (_, b)) in self.slots.iter_mut().zip(&other.slots) {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += alpha * y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        for (_, p) in self.slots.iter_mut() {
            for v in p.as_mut_slice() {
                *v *= alpha;
            }
        }
    }
}

/// Central-difference gradient of `f` at `params`, one scalar at a time.
///
/// The returned store has the same layout as `params`. A non-finite
/// evaluation aborts with an error naming the slot and flat index that was
/// being perturbed.
pub fn finite_diff_grad<F>(mut f: F, params: &ParamStore, eps: f64) -> Result<ParamStore>
where
    F: FnMut(&ParamStore) -> f64,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let mut grads = params.zeros_like();
    let mut probe = params.clone();
    for s in 0..params.slots.len() {
        let name = params.slots[s].0.clone();
        for i in 0..params.slots[s].1.len() {
            let orig = params.slots[s].1.as_slice()[i];
            probe.slots[s].1.as_mut_slice()[i] = orig + eps;
            let plus = f(&probe);
            probe.slots[s].1.as_mut_slice()[i] = orig - eps;
            let minus = f(&probe);
            probe.slots[s].1.as_mut_slice()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "objective while perturbing {name}[{i}]"
                )));
            }
            grads.slots[s].1.as_mut_slice()[i] = (plus - minus) / (2.0 * eps);
        }
    }
    Ok(grads)
}

/// Central differences of an extended-precision objective.
///
/// Scalars for which `include` is false are skipped and keep a zero
/// gradient. Each quotient divides by the step actually taken in `f64`.
pub(crate) fn finite_diff_grad_dd<F, I>(
    mut f: F,
    params: &ParamStore,
    eps: f64,
    mut include: I,
) -> Result<ParamStore>
where
    F: FnMut(&ParamStore) -> Result<Dd>,
    I: FnMut(&str, usize) -> bool,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let mut grads = params.zeros_like();
    let mut probe = params.clone();
    for s in 0..params.slots.len() {
        let name = params.slots[s].0.clone();
        for i in 0..params.slots[s].1.len() {
            if !include(&name, i) {
                continue;
            }
            let orig = params.slots[s].1.as_slice()[i];
            let (up, down) = (orig + eps, orig - eps);
            probe.slots[s].1.as_mut_slice()[i] = up;
            let plus = f(&probe)?;
            probe.slots[s].1.as_mut_slice()[i] = down;
            let minus = f(&probe)?;
            probe.slots[s].1.as_mut_slice()[i] = orig;
            let g = ((plus - minus) / (Dd::from_f64(up) - Dd::from_f64(down))).to_f64();
            if !g.is_finite() {
                return Err(Error::NonFinite(format!(
                    "objective while perturbing {name}[{i}]"
                )));
            }
            grads.slots[s].1.as_mut_slice()[i] = g;
        }
    }
    Ok(grads)
}
