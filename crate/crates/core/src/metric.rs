//! Standard and metric-extended cosine similarity.
//!
//! A metric `d = BᵀB` is always carried by its factor `B`, so positive
//! semi-definiteness holds structurally. The extended similarity of two
//! vectors is the ordinary cosine of `Ba` and `Bb`, which reduces to the
//! standard cosine when `B` is the identity.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Anything that exposes dense coordinates, optionally with a name used in
/// diagnostics.
pub trait Coords {
    fn coords(&self) -> &[f64];

    fn label(&self) -> &str {
        "<unnamed>"
    }
}

impl Coords for [f64] {
    fn coords(&self) -> &[f64] {
        self
    }
}

impl Coords for Vec<f64> {
    fn coords(&self) -> &[f64] {
        self
    }
}

impl<const N: usize> Coords for [f64; N] {
    fn coords(&self) -> &[f64] {
        self
    }
}

/// A word and its dense vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    word: String,
    vector: Vec<f64>,
}

impl Embedding {
    /// Rejects empty, non-finite and zero-norm vectors.
    pub fn new(word: impl Into<String>, vector: Vec<f64>) -> Result<Self> {
        let word = word.into();
        if vector.is_empty() {
            return Err(Error::InvalidValue(format!("`{word}` has an empty vector")));
        }
        if let Some(pos) = vector.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "`{word}` has a non-finite component at index {pos}"
            )));
        }
        if norm(&vector) == 0.0 {
            return Err(Error::DegenerateInput(format!("`{word}` is a zero vector")));
        }
        Ok(Self { word, vector })
    }

    pub fn word(&self) -> &str {
        &self.word
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

impl Coords for Embedding {
    fn coords(&self) -> &[f64] {
        &self.vector
    }

    fn label(&self) -> &str {
        &self.word
    }
}

/// Summation order for inner products.
///
/// `Sequential` is the left-to-right order used everywhere by default and
/// is what reproducibility guarantees are stated against. `Pairwise` bounds
/// rounding growth to `O(log D)` and is worth enabling for `D >= 1024`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Summation {
    #[default]
    Sequential,
    Pairwise,
}

const PAIRWISE_BLOCK: usize = 32;

fn pairwise_dot(a: &[f64], b: &[f64]) -> f64 {
    if a.len() <= PAIRWISE_BLOCK {
        return sequential_dot(a, b);
    }
    let mid = a.len() / 2;
    pairwise_dot(&a[..mid], &b[..mid]) + pairwise_dot(&a[mid..], &b[mid..])
}

#[inline]
pub(crate) fn sequential_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

const LANES: usize = 8;

#[inline]
fn reduce_lanes(acc: [f64; LANES], tail: f64) -> f64 {
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Eight interleaved accumulators; a fixed order, so still deterministic,
/// and vectorizable where the strictly sequential sum is not.
#[inline]
fn lane_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    reduce_lanes(acc, tail)
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// `Σ aᵢbᵢ` in sequential order.
pub fn euclidean_inner<A, B>(a: &A, b: &B) -> Result<f64>
where
    A: Coords + ?Sized,
    B: Coords + ?Sized,
{
    euclidean_inner_with(a, b, Summation::Sequential)
}

pub fn euclidean_inner_with<A, B>(a: &A, b: &B, summation: Summation) -> Result<f64>
where
    A: Coords + ?Sized,
    B: Coords + ?Sized,
{
    let (a, b) = (a.coords(), b.coords());
    check_dims(a.len(), b.len())?;
    Ok(match summation {
        Summation::Sequential => sequential_dot(a, b),
        Summation::Pairwise => pairwise_dot(a, b),
    })
}

pub fn norm<A: Coords + ?Sized>(a: &A) -> f64 {
    let a = a.coords();
    sequential_dot(a, a).sqrt()
}

/// Standard cosine similarity.
pub fn cosine<A, B>(a: &A, b: &B) -> Result<f64>
where
    A: Coords + ?Sized,
    B: Coords + ?Sized,
{
    let dot = euclidean_inner(a, b)?;
    let (na, nb) = (norm(a), norm(b));
    for (n, v) in [(na, a.label()), (nb, b.label())] {
        if n == 0.0 {
            return Err(Error::DegenerateInput(format!("`{v}` has zero norm")));
        }
    }
    Ok(dot / (na * nb))
}

/// Dense square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_row_major(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidValue("matrix dimension must be positive".into()));
        }
        check_dims(dim * dim, entries.len())?;
        Ok(Self { dim, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            check_dims(dim, row.len())?;
            entries.extend_from_slice(row);
        }
        Self::from_row_major(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.dim + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.entries[row * self.dim..(row + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn transpose(&self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.entries[j * d + i] = self.entries[i * d + j];
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Smallest eigenvalue, assuming the matrix is symmetric.
    pub fn min_symmetric_eigenvalue(&self) -> f64 {
        let m = nalgebra::DMatrix::from_row_slice(self.dim, self.dim, &self.entries);
        m.symmetric_eigenvalues().min()
    }

    /// One row per line, space-separated, 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.entries.len() * 25);
        for i in 0..self.dim {
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_text(text: &str, path: &Path) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| {
                        Error::format(path, lineno + 1, format!("malformed number `{tok}`"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = rows.first().map(Vec::len) {
                if row.len() != first {
                    return Err(Error::format(
                        path,
                        lineno + 1,
                        format!("expected {first} columns, found {}", row.len()),
                    ));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::format(path, 0, "empty matrix file"));
        }
        if rows[0].len() != rows.len() {
            return Err(Error::format(
                path,
                rows.len(),
                format!("matrix is {}x{}, expected square", rows.len(), rows[0].len()),
            ));
        }
        Self::from_rows(&rows)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text, path)
    }
}

/// The trainable factor `B` of the metric `BᵀB`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricFactor(SquareMatrix);

impl MetricFactor {
    pub fn identity(dim: usize) -> Self {
        Self(SquareMatrix::identity(dim))
    }

    pub fn from_matrix(matrix: SquareMatrix) -> Result<Self> {
        if let Some(pos) = matrix.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "factor entry ({}, {}) is not finite",
                pos / matrix.dim(),
                pos % matrix.dim()
            )));
        }
        Ok(Self(matrix))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_matrix(SquareMatrix::from_rows(rows)?)
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.0
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [f64] {
        self.0.as_mut_slice()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.entries_mut().iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// `Bx`.
    pub fn apply<A: Coords + ?Sized>(&self, x: &A) -> Result<Vec<f64>> {
        let x = x.coords();
        check_dims(self.dim(), x.len())?;
        Ok(self.apply_unchecked(x))
    }

    pub(crate) fn apply_unchecked(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|i| lane_dot(self.0.row(i), x)).collect()
    }

    /// `(Ba, Bb)` in one pass over `B`; same values as two `apply` calls.
    fn apply_both(&self, a: &[f64], b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dims(self.dim(), a.len())?;
        check_dims(self.dim(), b.len())?;
        Ok((0..self.dim())
            .map(|i| {
                let row = self.0.row(i);
                (lane_dot(row, a), lane_dot(row, b))
            })
            .unzip())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.0.write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_matrix(SquareMatrix::read(path)?)
    }
}

/// `∂L/∂B`, same shape as the factor it differentiates.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer(SquareMatrix);

impl GradientBuffer {
    pub fn zeros(dim: usize) -> Self {
        Self(SquareMatrix::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0.get(row, col)
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.0.as_mut_slice()
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }

    /// `self += g xᵀ`.
    pub(crate) fn add_outer(&mut self, g: &[f64], x: &[f64]) {
        let d = self.dim();
        let entries = self.0.as_mut_slice();
        for (i, gi) in g.iter().enumerate() {
            if *gi == 0.0 {
                continue;
            }
            for (slot, xj) in entries[i * d..(i + 1) * d].iter_mut().zip(x) {
                *slot += gi * xj;
            }
        }
    }
}

/// `(Ba)·(Bb)`, i.e. `aᵀ BᵀB b`.
pub fn metric_inner<A, B>(a: &A, b: &B, factor: &MetricFactor) -> Result<f64>
where
    A: Coords + ?Sized,
    B: Coords + ?Sized,
{
    let u = factor.apply(a)?;
    let v = factor.apply(b)?;
    Ok(sequential_dot(&u, &v))
}

/// Cosine of two already-transformed vectors; `None` if either is zero.
#[inline]
pub(crate) fn projected_cosine(u: &[f64], v: &[f64]) -> Option<(f64, f64, f64)> {
    let nu = sequential_dot(u, u).sqrt();
    let nv = sequential_dot(v, v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return None;
    }
    Some((sequential_dot(u, v) / (nu * nv), nu, nv))
}

/// Cosine similarity of `Ba` and `Bb`.
pub fn metric_cosine<A, B>(a: &A, b: &B, factor: &MetricFactor) -> Result<f64>
where
    A: Coords + ?Sized,
    B: Coords + ?Sized,
{
    let (u, v) = factor.apply_both(a.coords(), b.coords())?;
    check_projection(&u, a)?;
    check_projection(&v, b)?;
    Ok(projected_cosine(&u, &v).expect("nonzero projections").0)
}

fn check_projection<A: Coords + ?Sized>(u: &[f64], source: &A) -> Result<()> {
    if sequential_dot(u, u) == 0.0 {
        return Err(Error::DegenerateProjection {
            word: source.label().to_string(),
        });
    }
    Ok(())
}

/// Accumulates `upstream · ∂s/∂u` into `gu` and the mirrored term into `gv`,
/// where `s` is the cosine of `u` and `v`.
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate_cosine_grad(
    u: &[f64],
    v: &[f64],
    s: f64,
    nu: f64,
    nv: f64,
    upstream: f64,
    gu: &mut [f64],
    gv: &mut [f64],
) {
    let cross = upstream / (nu * nv);
    let self_u = upstream * s / (nu * nu);
    let self_v = upstream * s / (nv * nv);
    for i in 0..u.len() {
        gu[i] += cross * v[i] - self_u * u[i];
        gv[i] += cross * u[i] - self_v * v[i];
    }
}

/// `upstream · ∂s/∂B` for `s = metric_cosine(a, b, B)`.
///
/// With `u = Ba`, `v = Bb`: `∂s/∂u = v/(‖u‖‖v‖) − s·u/‖u‖²` (and the mirror
/// for `v`), then `∂s/∂B = (∂s/∂u)aᵀ + (∂s/∂v)bᵀ`.
pub fn metric_cosine_backward<A, B>(
    a: &A,
    b: &B,
    factor: &MetricFactor,
    upstream: f64,
) -> Result<GradientBuffer>
where
    A: Coords + ?Sized,
    B: Coords + ?Sized,
{
    let u = factor.apply(a)?;
    let v = factor.apply(b)?;
    check_projection(&u, a)?;
    check_projection(&v, b)?;
    let (s, nu, nv) = projected_cosine(&u, &v).expect("nonzero projections");
    let d = factor.dim();
    let mut gu = vec![0.0; d];
    let mut gv = vec![0.0; d];
    accumulate_cosine_grad(&u, &v, s, nu, nv, upstream, &mut gu, &mut gv);
    let mut grad = GradientBuffer::zeros(d);
    grad.add_outer(&gu, a.coords());
    grad.add_outer(&gv, b.coords());
    Ok(grad)
}

/// The metric `BᵀB`. Inspection and export only.
pub fn gram(factor: &MetricFactor) -> SquareMatrix {
    let b = factor.matrix();
    let d = b.dim();
    let mut out = SquareMatrix::zeros(d);
    for i in 0..d {
        for j in i..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += b.get(k, i) * b.get(k, j);
            }
            out.as_mut_slice()[i * d + j] = acc;
            out.as_mut_slice()[j * d + i] = acc;
        }
    }
    out
}

/// Largest negative eigenvalue tolerated when exporting a metric.
pub const PSD_TOLERANCE: f64 = 1e-9;

/// Writes `BᵀB` after confirming it is positive semi-definite.
pub fn export_gram(factor: &MetricFactor, path: &Path) -> Result<()> {
    let metric = gram(factor);
    let min_eig = metric.min_symmetric_eigenvalue();
    if min_eig < -PSD_TOLERANCE {
        return Err(Error::InvalidValue(format!(
            "metric has eigenvalue {min_eig:e}, not positive semi-definite"
        )));
    }
    metric.write(path)
}
