//! Tensor representation, normalization, and the sample space Ω.
//!
//! A nonnegative order-N tensor is stored dense in row-major order (last
//! index fastest). To treat it as a discrete probability mass function we
//! normalize by the total mass over a *sample space* Ω, an ordered subset of
//! the full index grid. Entries outside Ω are nonexistent for every
//! downstream sum and are reported as 0 on reconstruction output.
//!
//! Index vectors are 1-based; the least element (1,…,1) is always a member
//! of Ω because it carries the normalizer of the log-linear model.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::reader::{parse_f64, parse_index, Lines};
use crate::sum::neumaier;

/// The extents (I_1, …, I_N) of an order-N tensor.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape {
    dims: Vec<usize>,
    /// Row-major strides, last index fastest.
    strides: Vec<usize>,
}

impl Shape {
    /// Every extent must be ≥ 1 and the total cell count must fit in
    /// `usize`.
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidInput("tensor order must be at least 1".into()));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidInput("every extent must be at least 1".into()));
        }
        let mut cells: usize = 1;
        for &d in &dims {
            cells = cells
                .checked_mul(d)
                .ok_or_else(|| Error::InvalidInput("cell count overflows machine integer".into()))?;
        }
        let mut strides = vec![1usize; dims.len()];
        for k in (0..dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        Ok(Shape { dims, strides })
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn cell_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn contains(&self, v: &IndexVector) -> bool {
        v.components().len() == self.dims.len()
            && v.components().iter().zip(&self.dims).all(|(&i, &d)| i >= 1 && i <= d)
    }

    /// Row-major linear code of an in-range index vector.
    pub fn linear_code(&self, v: &IndexVector) -> usize {
        debug_assert!(self.contains(v));
        v.components()
            .iter()
            .zip(&self.strides)
            .map(|(&i, &s)| (i - 1) * s)
            .sum()
    }

    /// Inverse of [`Shape::linear_code`].
    pub fn index_from_code(&self, code: usize) -> IndexVector {
        debug_assert!(code < self.cell_count());
        let comps = self
            .strides
            .iter()
            .zip(&self.dims)
            .map(|(&s, &d)| code / s % d + 1)
            .collect();
        IndexVector::new(comps)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", parts.join("x"))
    }
}

/// A 1-based N-tuple of indices identifying one tensor entry.
///
/// `Ord` is lexicographic on the components, which for a full grid coincides
/// with row-major linear order; all member lists in this crate use that
/// canonical order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IndexVector(Vec<usize>);

impl IndexVector {
    pub fn new(components: Vec<usize>) -> Self {
        IndexVector(components)
    }

    pub fn components(&self) -> &[usize] {
        &self.0
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    /// True for the least element (1,…,1).
    pub fn is_least(&self) -> bool {
        self.0.iter().all(|&i| i == 1)
    }
}

impl fmt::Display for IndexVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Input text formats understood by [`RawTensor::load`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorFormat {
    /// Shape on the first line, then all ∏I_k values in row-major order.
    DenseText,
    /// `# shape: I1 I2 … IN` header, then `i1 … iN value` lines; unlisted
    /// entries are 0.
    SparseCoo,
}

impl FromStr for TensorFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense-text" | "dense" => Ok(TensorFormat::DenseText),
            "sparse-coo" | "sparse" => Ok(TensorFormat::SparseCoo),
            other => Err(Error::InvalidInput(format!(
                "unknown tensor format '{other}' (expected dense-text or sparse-coo)"
            ))),
        }
    }
}

/// A dense nonnegative tensor.
///
/// Positive total mass is demanded where it matters, at
/// [`NormalizedTensor::normalize`]; an all-zero tensor is still a valid
/// parse and a valid RMSE operand.
#[derive(Debug, Clone)]
pub struct RawTensor {
    shape: Shape,
    values: Vec<f64>,
}

impl RawTensor {
    /// Build from row-major values, all finite and ≥ 0.
    pub fn from_dense(shape: Shape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.cell_count() {
            return Err(Error::ShapeMismatch(format!(
                "shape {} holds {} cells but {} values were given",
                shape,
                shape.cell_count(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "tensor entries must be finite and nonnegative, got {v}"
            )));
        }
        Ok(RawTensor { shape, values })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at_code(&self, code: usize) -> f64 {
        self.values[code]
    }

    pub fn get(&self, v: &IndexVector) -> f64 {
        self.values[self.shape.linear_code(v)]
    }

    /// Parse a tensor from a byte stream in the given format.
    pub fn load(source: impl Read, format: TensorFormat) -> Result<Self> {
        match format {
            TensorFormat::DenseText => Self::load_dense(source),
            TensorFormat::SparseCoo => Self::load_sparse(source),
        }
    }

    fn load_dense(source: impl Read) -> Result<Self> {
        let lines = Lines::read(source)?;
        let mut it = lines.iter();
        let (shape_line, header) = it
            .next()
            .ok_or_else(|| Error::parse(lines.last_line.max(1), "missing shape line"))?;
        let mut dims = Vec::new();
        for tok in header.split_whitespace() {
            dims.push(parse_index(shape_line, tok)?);
        }
        let shape = Shape::new(dims).map_err(|e| Error::parse(shape_line, e.to_string()))?;
        let expected = shape.cell_count();

        let mut values = Vec::with_capacity(expected);
        for (no, line) in it {
            for tok in line.split_whitespace() {
                if values.len() == expected {
                    return Err(Error::parse(no, format!("too many values: expected {expected}")));
                }
                let v = parse_f64(no, tok)?;
                if v < 0.0 {
                    return Err(Error::parse(no, format!("negative value {v}")));
                }
                values.push(v);
            }
        }
        if values.len() != expected {
            return Err(Error::parse(
                lines.last_line.max(1),
                format!("expected {} values, found {}", expected, values.len()),
            ));
        }
        Self::from_dense(shape, values)
    }

    fn load_sparse(source: impl Read) -> Result<Self> {
        let lines = Lines::read_keeping_comments(source)?;
        let mut it = lines.iter().peekable();
        let (no, header) = it
            .next()
            .ok_or_else(|| Error::parse(lines.last_line.max(1), "missing '# shape:' header"))?;
        let rest = header
            .strip_prefix('#')
            .map(str::trim)
            .and_then(|s| s.strip_prefix("shape:"))
            .ok_or_else(|| Error::parse(no, "first line must be '# shape: I1 I2 ... IN'"))?;
        let mut dims = Vec::new();
        for tok in rest.split_whitespace() {
            dims.push(parse_index(no, tok)?);
        }
        let shape = Shape::new(dims).map_err(|e| Error::parse(no, e.to_string()))?;
        let arity = shape.order();

        let mut values = vec![0.0; shape.cell_count()];
        let mut seen: HashSet<usize> = HashSet::new();
        for (no, line) in it {
            if line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != arity + 1 {
                return Err(Error::parse(
                    no,
                    format!("expected {} indices and a value, got {} tokens", arity, toks.len()),
                ));
            }
            let mut comps = Vec::with_capacity(arity);
            for (k, tok) in toks[..arity].iter().enumerate() {
                let i = parse_index(no, tok)?;
                if i > shape.dims()[k] {
                    return Err(Error::parse(
                        no,
                        format!("index {} out of range for mode {} (extent {})", i, k + 1, shape.dims()[k]),
                    ));
                }
                comps.push(i);
            }
            let v = parse_f64(no, toks[arity])?;
            if v < 0.0 {
                return Err(Error::parse(no, format!("negative value {v}")));
            }
            let code = shape.linear_code(&IndexVector::new(comps));
            if !seen.insert(code) {
                return Err(Error::parse(no, "duplicate sparse index".to_string()));
            }
            values[code] = v;
        }
        Self::from_dense(shape, values)
    }

    /// Write in dense-text format, one row (last-index run) per line.
    ///
    /// Values use shortest round-trip formatting, so write → load is exact.
    pub fn write_dense(&self, mut out: impl Write) -> Result<()> {
        let dims: Vec<String> = self.shape.dims().iter().map(|d| d.to_string()).collect();
        writeln!(out, "{}", dims.join(" "))?;
        let row = *self.shape.dims().last().expect("order >= 1");
        for chunk in self.values.chunks(row) {
            let cells: Vec<String> = chunk.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", cells.join(" "))?;
        }
        Ok(())
    }
}

/// The ordered set Ω of retained index vectors.
///
/// Members are kept as sorted row-major linear codes; for index vectors the
/// sort order is exactly lexicographic order on components. Construction is
/// deterministic, so the same input always yields bit-identical member
/// lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSpace {
    shape: Shape,
    codes: Vec<usize>,
}

impl SampleSpace {
    /// Ω = the full index grid.
    pub fn full(shape: Shape) -> Arc<Self> {
        let codes = (0..shape.cell_count()).collect();
        Arc::new(SampleSpace { shape, codes })
    }

    /// Ω = full grid minus `exclude`. Excluding the least element (1,…,1) is
    /// an error: it carries the normalizer θ_⊥ = −ψ(θ) of the log-linear
    /// parameterization.
    pub fn excluding<'a, I>(shape: Shape, exclude: I) -> Result<Arc<Self>>
    where
        I: IntoIterator<Item = &'a IndexVector>,
    {
        let mut drop: HashSet<usize> = HashSet::new();
        for v in exclude {
            if v.arity() != shape.order() {
                return Err(Error::ArityMismatch {
                    expected: shape.order(),
                    got: v.arity(),
                });
            }
            if v.is_least() {
                return Err(Error::InvalidInput(
                    "cannot exclude the least element (1,...,1) from the sample space".into(),
                ));
            }
            if shape.contains(v) {
                drop.insert(shape.linear_code(v));
            }
        }
        let codes = (0..shape.cell_count()).filter(|c| !drop.contains(c)).collect();
        Ok(Arc::new(SampleSpace { shape, codes }))
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// |Ω|.
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// True when Ω is the whole grid.
    pub fn is_full(&self) -> bool {
        self.codes.len() == self.shape.cell_count()
    }

    /// Linear code of the member at `ordinal`.
    pub fn code(&self, ordinal: usize) -> usize {
        self.codes[ordinal]
    }

    pub fn codes(&self) -> &[usize] {
        &self.codes
    }

    /// The member at `ordinal`, decoded.
    pub fn member(&self, ordinal: usize) -> IndexVector {
        self.shape.index_from_code(self.codes[ordinal])
    }

    /// Ordinal of an index vector, if it is a member.
    pub fn position(&self, v: &IndexVector) -> Option<usize> {
        if !self.shape.contains(v) {
            return None;
        }
        self.position_of_code(self.shape.linear_code(v))
    }

    pub fn position_of_code(&self, code: usize) -> Option<usize> {
        self.codes.binary_search(&code).ok()
    }

    /// Members in canonical (lexicographic) order.
    pub fn iter(&self) -> impl Iterator<Item = IndexVector> + '_ {
        self.codes.iter().map(|&c| self.shape.index_from_code(c))
    }

    /// Flat member-by-component table (row-major per ordinal), for kernels
    /// that scan Ω many times.
    pub(crate) fn component_table(&self) -> Vec<u32> {
        let n = self.shape.order();
        let mut table = Vec::with_capacity(self.codes.len() * n);
        for &code in &self.codes {
            for (&s, &d) in self.shape.strides.iter().zip(&self.shape.dims) {
                table.push((code / s % d + 1) as u32);
            }
        }
        table
    }
}

/// A probability mass function over Ω, remembering the original total mass
/// so reconstructions can be compared against the raw input.
#[derive(Debug, Clone)]
pub struct NormalizedTensor {
    space: Arc<SampleSpace>,
    probs: Vec<f64>,
    total_mass: f64,
}

impl NormalizedTensor {
    /// Wrap an explicit probability vector. The entries must be finite,
    /// nonnegative, and sum to 1 within 1e-12.
    pub fn new(space: Arc<SampleSpace>, probs: Vec<f64>, total_mass: f64) -> Result<Self> {
        if probs.len() != space.len() {
            return Err(Error::ShapeMismatch(format!(
                "sample space has {} members but {} probabilities were given",
                space.len(),
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidInput(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        let total = neumaier(probs.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        if !(total_mass.is_finite() && total_mass > 0.0) {
            return Err(Error::InvalidInput("total mass must be positive".into()));
        }
        Ok(NormalizedTensor { space, probs, total_mass })
    }

    /// Divide each retained entry by the total mass over Ω. Excluded entries
    /// do not contribute to the sum.
    pub fn normalize(x: &RawTensor, space: Arc<SampleSpace>) -> Result<Self> {
        if x.shape() != space.shape() {
            return Err(Error::ShapeMismatch(format!(
                "tensor shape {} does not match sample-space shape {}",
                x.shape(),
                space.shape()
            )));
        }
        let mass = neumaier(space.codes().iter().map(|&c| x.value_at_code(c)));
        if mass <= 0.0 {
            return Err(Error::InvalidInput(
                "zero total mass over the sample space".into(),
            ));
        }
        let probs = space.codes().iter().map(|&c| x.value_at_code(c) / mass).collect();
        Ok(NormalizedTensor { space, probs, total_mass: mass })
    }

    /// Scale back to the original mass. Entries excluded from Ω are emitted
    /// as 0.
    pub fn denormalize(&self) -> RawTensor {
        let mut values = vec![0.0; self.space.shape().cell_count()];
        for (&code, &p) in self.space.codes().iter().zip(&self.probs) {
            values[code] = p * self.total_mass;
        }
        RawTensor {
            shape: self.space.shape().clone(),
            values,
        }
    }

    pub fn space(&self) -> &Arc<SampleSpace> {
        &self.space
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, ordinal: usize) -> f64 {
        self.probs[ordinal]
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Same distribution, tagged with a different original mass (used to
    /// carry the input's mass onto the reconstruction).
    pub fn with_total_mass(mut self, total_mass: f64) -> Self {
        self.total_mass = total_mass;
        self
    }
}

/// Check that two tensors live on the same Ω.
pub(crate) fn same_space(a: &NormalizedTensor, b: &NormalizedTensor) -> bool {
    Arc::ptr_eq(a.space(), b.space()) || a.space() == b.space()
}
