//! Fully visible Boltzmann machines as a special case of the poset model.
//!
//! On the binary sample space Ω = {1,2}ⁿ (state x_i = index_i − 1), the
//! Gibbs distributions of an undirected graph G = (V, E) are exactly the
//! tensors decomposable with B = B(V) ∪ B(E): the vertex indicators carry
//! the biases, the edge indicators carry the weights, and exp(ψ(θ)) is the
//! partition function. Fitting by e-projection therefore performs exact
//! maximum-likelihood Boltzmann machine learning — the moment-matching
//! condition η = η̂ is the classical learning equation — with no partition
//! function approximation, which is why the variable count is capped: Ω is
//! materialized exactly.

use std::io::Read;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::optimizer::{decompose, DecompositionResult, SolverConfig};
use crate::poset::Basis;
use crate::reader::{parse_index, Lines};
use crate::tensor::{IndexVector, NormalizedTensor, SampleSpace, Shape};

/// Default cap on the number of variables (Ω holds 2ⁿ states).
pub const DEFAULT_VARIABLE_LIMIT: usize = 20;

/// An undirected graph over variables 1..=n with no self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoltzmannGraph {
    n: usize,
    /// Normalized a < b, sorted, deduplicated.
    edges: Vec<(usize, usize)>,
}

impl BoltzmannGraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Self::with_variable_limit(n, edges, DEFAULT_VARIABLE_LIMIT)
    }

    pub fn with_variable_limit(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        limit: usize,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("at least one variable is required".into()));
        }
        if n > limit {
            return Err(Error::InvalidInput(format!(
                "{n} variables exceed the exact-computation limit of {limit} (2^n states are materialized)"
            )));
        }
        let mut normalized = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidInput(format!("self-loop on variable {a}")));
            }
            if a < 1 || a > n || b < 1 || b > n {
                return Err(Error::InvalidInput(format!(
                    "edge ({a},{b}) out of range 1..={n}"
                )));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        normalized.dedup();
        Ok(BoltzmannGraph { n, edges: normalized })
    }

    /// Parse `n` on the first line, then one `a b` edge per line; `#`
    /// comments allowed.
    pub fn parse(source: impl Read) -> Result<Self> {
        let lines = Lines::read(source)?;
        let mut it = lines.iter();
        let (no, first) = it
            .next()
            .ok_or_else(|| Error::parse(lines.last_line.max(1), "missing variable count"))?;
        let toks: Vec<&str> = first.split_whitespace().collect();
        if toks.len() != 1 {
            return Err(Error::parse(no, "first line must be the variable count"));
        }
        let n = parse_index(no, toks[0])?;
        let mut edges = Vec::new();
        for (no, line) in it {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 2 {
                return Err(Error::parse(no, "expected an 'a b' edge"));
            }
            let a = parse_index(no, toks[0])?;
            let b = parse_index(no, toks[1])?;
            edges.push((a, b));
        }
        Self::new(n, edges).map_err(|e| match e {
            Error::InvalidInput(msg) => Error::parse(lines.last_line.max(1), msg),
            other => other,
        })
    }

    pub fn variable_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// The (2, 2, …, 2) shape of the state tensor.
    pub fn binary_shape(&self) -> Shape {
        Shape::new(vec![2; self.n]).expect("binary shape is valid")
    }

    /// Index vector with 2 exactly at the given (1-based) positions.
    fn indicator(&self, positions: &[usize]) -> IndexVector {
        let mut comps = vec![1; self.n];
        for &p in positions {
            comps[p - 1] = 2;
        }
        IndexVector::new(comps)
    }
}

/// B(V) ∪ B(E) on the full binary sample space: one indicator per vertex
/// and one per edge, |B| = |V| + |E|.
pub fn basis_from_graph(g: &BoltzmannGraph) -> Basis {
    let space = SampleSpace::full(g.binary_shape());
    basis_from_graph_on(g, &space).expect("all indicators live in the full grid")
}

/// Same construction against a caller-supplied space. Indicators excluded
/// from Ω are dropped (that changes the model, which the caller opted into
/// by excluding states).
pub fn basis_from_graph_on(g: &BoltzmannGraph, space: &Arc<SampleSpace>) -> Result<Basis> {
    if space.shape() != &g.binary_shape() {
        return Err(Error::ShapeMismatch(format!(
            "expected binary shape {}, got {}",
            g.binary_shape(),
            space.shape()
        )));
    }
    let mut members = Vec::with_capacity(g.n + g.edges.len());
    let mut dropped = 0usize;
    for a in 1..=g.n {
        let v = g.indicator(&[a]);
        if space.position(&v).is_some() {
            members.push(v);
        } else {
            dropped += 1;
        }
    }
    for &(a, b) in &g.edges {
        let v = g.indicator(&[a, b]);
        if space.position(&v).is_some() {
            members.push(v);
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        log::warn!("{dropped} indicator(s) fall outside the sample space; the fitted model loses those parameters");
    }
    Basis::from_members(space.clone(), members)
}

/// A weight for one undirected edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeWeight {
    pub a: usize,
    pub b: usize,
    pub value: f64,
}

/// A fitted fully visible Boltzmann machine.
#[derive(Debug, Clone)]
pub struct BoltzmannFit {
    /// θ_i per vertex, in vertex order 1..=n.
    pub biases: Vec<f64>,
    /// θ_ij per edge, in normalized edge order.
    pub weights: Vec<EdgeWeight>,
    /// log Z = ψ(θ) of the fitted model.
    pub log_partition: f64,
    pub result: DecompositionResult,
}

/// Exact maximum-likelihood fit of the graph's Gibbs family to an empirical
/// distribution over {1,2}ⁿ.
///
/// Indicators that fell outside Ω are reported with parameter 0 (they carry
/// no θ in the reduced model).
pub fn fit_boltzmann(
    empirical: &NormalizedTensor,
    g: &BoltzmannGraph,
    cfg: &SolverConfig,
) -> Result<BoltzmannFit> {
    let basis = Arc::new(basis_from_graph_on(g, empirical.space())?);
    let result = decompose(empirical, &basis, cfg)?;
    let fitted_basis = result.theta.basis();
    let theta = result.theta.values();
    let param = |v: &IndexVector| -> f64 {
        fitted_basis.position(v).map_or(0.0, |i| theta[i])
    };
    let biases = (1..=g.n).map(|a| param(&g.indicator(&[a]))).collect();
    let weights = g
        .edges
        .iter()
        .map(|&(a, b)| EdgeWeight {
            a,
            b,
            value: param(&g.indicator(&[a, b])),
        })
        .collect();
    Ok(BoltzmannFit {
        biases,
        weights,
        log_partition: result.psi,
        result,
    })
}
