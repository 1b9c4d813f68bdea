//! The componentwise partial order on index vectors, the ζ incidence
//! structure, and construction of decomposition bases.
//!
//! u ≤ v holds iff every component of u is ≤ the matching component of v;
//! the sample space Ω is a poset under this order with least element
//! (1,…,1). A decomposition basis B ⊆ Ω⁺ selects the poset elements that
//! carry free parameters. The zeta function ζ(u,v) = [u ≤ v] is materialized
//! as a bit-packed |B| × |Ω| incidence so that reconstruction, η, and the
//! Fisher matrix reduce to bit-masked sums; the O(|Ω||B|) per-iteration cost
//! of those sums dominates solver runtime.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::PathBuf;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::reader::{parse_index, Lines};
use crate::tensor::{IndexVector, NormalizedTensor, SampleSpace};

/// ζ(u,v): true iff u ≤ v componentwise.
///
/// Reflexive, antisymmetric, and transitive; errors on arity mismatch.
pub fn leq(u: &IndexVector, v: &IndexVector) -> Result<bool> {
    if u.arity() != v.arity() {
        return Err(Error::ArityMismatch {
            expected: u.arity(),
            got: v.arity(),
        });
    }
    Ok(leq_unchecked(u.components(), v.components()))
}

#[inline]
pub(crate) fn leq_unchecked(u: &[usize], v: &[usize]) -> bool {
    u.iter().zip(v).all(|(a, b)| a <= b)
}

/// ↓v ∩ B: the basis members below v.
pub fn down_set(v: &IndexVector, basis: &Basis) -> Vec<IndexVector> {
    basis
        .iter()
        .filter(|u| leq_unchecked(u.components(), v.components()))
        .collect()
}

/// ↑v ∩ Ω: the sample-space members above v. Exclusions from Ω never
/// appear.
pub fn up_set(v: &IndexVector, space: &SampleSpace) -> Vec<IndexVector> {
    assert_eq!(v.arity(), space.shape().order(), "arity mismatch");
    space
        .iter()
        .filter(|u| leq_unchecked(v.components(), u.components()))
        .collect()
}

/// The subset B ⊆ Ω⁺ carrying the natural parameters, in canonical
/// (lexicographic) order.
///
/// The least element (1,…,1) is never a member: its coefficient is the
/// normalizer −ψ(θ), not a free parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    space: Arc<SampleSpace>,
    codes: Vec<usize>,
}

impl Basis {
    /// Build from explicit members; duplicates collapse, order is
    /// canonicalized. Every member must lie in Ω⁺.
    pub fn from_members<I>(space: Arc<SampleSpace>, members: I) -> Result<Self>
    where
        I: IntoIterator<Item = IndexVector>,
    {
        let mut codes = BTreeSet::new();
        for v in members {
            if v.arity() != space.shape().order() {
                return Err(Error::ArityMismatch {
                    expected: space.shape().order(),
                    got: v.arity(),
                });
            }
            if v.is_least() {
                return Err(Error::InvalidInput(
                    "the least element (1,...,1) cannot be a basis member".into(),
                ));
            }
            if space.position(&v).is_none() {
                return Err(Error::InvalidInput(format!(
                    "basis member {v} is not in the sample space"
                )));
            }
            codes.insert(space.shape().linear_code(&v));
        }
        Ok(Basis {
            space,
            codes: codes.into_iter().collect(),
        })
    }

    /// Codes must be sorted, deduplicated, members of Ω, and nonzero (the
    /// least element always has code 0).
    pub(crate) fn from_codes(space: Arc<SampleSpace>, codes: Vec<usize>) -> Self {
        debug_assert!(codes.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(codes.iter().all(|&c| c != 0 && space.position_of_code(c).is_some()));
        Basis { space, codes }
    }

    pub fn space(&self) -> &Arc<SampleSpace> {
        &self.space
    }

    /// |B|.
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[usize] {
        &self.codes
    }

    pub fn member(&self, i: usize) -> IndexVector {
        self.space.shape().index_from_code(self.codes[i])
    }

    pub fn position(&self, v: &IndexVector) -> Option<usize> {
        if !self.space.shape().contains(v) {
            return None;
        }
        self.codes.binary_search(&self.space.shape().linear_code(v)).ok()
    }

    /// Members in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = IndexVector> + '_ {
        self.codes.iter().map(|&c| self.space.shape().index_from_code(c))
    }
}

/// Bit-packed ζ incidence: row u holds one bit per Ω ordinal, set iff
/// u ≤ v.
#[derive(Debug, Clone)]
pub struct ZetaIncidence {
    basis: Arc<Basis>,
    words_per_row: usize,
    bits: Vec<u64>,
}

impl ZetaIncidence {
    pub fn new(basis: Arc<Basis>) -> Self {
        let space = basis.space();
        let n = space.len();
        let arity = space.shape().order();
        let words_per_row = n.div_ceil(64);
        let table = space.component_table();
        let mut bits = vec![0u64; words_per_row * basis.len()];
        for (r, &ucode) in basis.codes().iter().enumerate() {
            let u = space.shape().index_from_code(ucode);
            let ucomp: Vec<u32> = u.components().iter().map(|&c| c as u32).collect();
            // u ≤ v forces lex(u) ≤ lex(v), so members below u's ordinal
            // can be skipped.
            let start = space.position_of_code(ucode).expect("basis member is in Ω");
            let row = &mut bits[r * words_per_row..(r + 1) * words_per_row];
            for j in start..n {
                let vc = &table[j * arity..(j + 1) * arity];
                if ucomp.iter().zip(vc).all(|(a, b)| a <= b) {
                    row[j / 64] |= 1u64 << (j % 64);
                }
            }
        }
        ZetaIncidence {
            basis,
            words_per_row,
            bits,
        }
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn space(&self) -> &Arc<SampleSpace> {
        self.basis.space()
    }

    /// ζ(u, v) with u the row index into B and v the ordinal into Ω.
    pub fn bit(&self, row: usize, ordinal: usize) -> bool {
        let w = self.row(row)[ordinal / 64];
        w >> (ordinal % 64) & 1 == 1
    }

    #[inline]
    fn row(&self, r: usize) -> &[u64] {
        &self.bits[r * self.words_per_row..(r + 1) * self.words_per_row]
    }

    /// Rows whose up-set within Ω is empty (identically zero rows).
    pub(crate) fn empty_rows(&self) -> Vec<usize> {
        (0..self.basis.len())
            .filter(|&r| self.row(r).iter().all(|&w| w == 0))
            .collect()
    }

    /// scores[v] += θ_u for every v ∈ ↑u, for every basis row u.
    pub(crate) fn add_theta_scores(&self, theta: &[f64], scores: &mut [f64]) {
        debug_assert_eq!(theta.len(), self.basis.len());
        debug_assert_eq!(scores.len(), self.space().len());
        for (r, &t) in theta.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            for (wi, &word) in self.row(r).iter().enumerate() {
                let mut w = word;
                while w != 0 {
                    scores[wi * 64 + w.trailing_zeros() as usize] += t;
                    w &= w - 1;
                }
            }
        }
    }

    /// Σ weights[v] over v ∈ ↑u ∩ Ω for row u.
    pub(crate) fn masked_sum(&self, r: usize, weights: &[f64]) -> f64 {
        debug_assert_eq!(weights.len(), self.space().len());
        let mut acc = 0.0;
        for (wi, &word) in self.row(r).iter().enumerate() {
            let mut w = word;
            while w != 0 {
                acc += weights[wi * 64 + w.trailing_zeros() as usize];
                w &= w - 1;
            }
        }
        acc
    }

    /// Σ weights[v] over v ∈ ↑u ∩ ↑u' ∩ Ω for rows u, u'.
    pub(crate) fn pair_mass(&self, a: usize, b: usize, weights: &[f64]) -> f64 {
        let ra = self.row(a);
        let rb = self.row(b);
        let mut acc = 0.0;
        for wi in 0..ra.len() {
            let mut w = ra[wi] & rb[wi];
            while w != 0 {
                acc += weights[wi * 64 + w.trailing_zeros() as usize];
                w &= w - 1;
            }
        }
        acc
    }
}

/// B₁: per-mode axis vectors — for every mode k, all v ∈ Ω⁺ with v_j = 1
/// for j ≠ k. Acts as a normalizer for each mode.
pub fn basis_b1(space: &Arc<SampleSpace>) -> Basis {
    let shape = space.shape();
    let mut codes = BTreeSet::new();
    for k in 0..shape.order() {
        for i in 2..=shape.dims()[k] {
            let mut comps = vec![1; shape.order()];
            comps[k] = i;
            let v = IndexVector::new(comps);
            if space.position(&v).is_some() {
                codes.insert(shape.linear_code(&v));
            }
        }
    }
    Basis::from_codes(space.clone(), codes.into_iter().collect())
}

/// The stride set C_k(l) = {c·⌊I_k/l⌋ : c ∈ [l]}.
///
/// When l does not divide I_k the selected indices are multiples of
/// ⌊I_k/l⌋ and may omit I_k itself; the formula is applied as given.
fn stride_set(extent: usize, l: usize) -> Vec<usize> {
    let step = extent / l;
    (1..=l).map(|c| c * step).collect()
}

/// B₂(l): row/column normalizers on the first two modes — vectors
/// (1, c, 1, …, 1) with c ∈ C₂(l) and (c, 1, 1, …, 1) with c ∈ C₁(l),
/// intersected with Ω⁺. At most 2l members.
pub fn basis_b2(space: &Arc<SampleSpace>, l: usize) -> Result<Basis> {
    let shape = space.shape();
    if shape.order() < 2 {
        return Err(Error::InvalidInput(
            "this basis family requires a tensor of order >= 2".into(),
        ));
    }
    let (i1, i2) = (shape.dims()[0], shape.dims()[1]);
    if l < 1 || l > i1.min(i2) {
        return Err(Error::InvalidInput(format!(
            "l = {l} is out of range 1..={}",
            i1.min(i2)
        )));
    }
    let mut codes = BTreeSet::new();
    for c in stride_set(i2, l) {
        let mut comps = vec![1; shape.order()];
        comps[1] = c;
        let v = IndexVector::new(comps);
        if !v.is_least() && space.position(&v).is_some() {
            codes.insert(shape.linear_code(&v));
        }
    }
    for c in stride_set(i1, l) {
        let mut comps = vec![1; shape.order()];
        comps[0] = c;
        let v = IndexVector::new(comps);
        if !v.is_least() && space.position(&v).is_some() {
            codes.insert(shape.linear_code(&v));
        }
    }
    Ok(Basis::from_codes(space.clone(), codes.into_iter().collect()))
}

/// B₃(l): for every frontal slice i₃, the l highest-probability (i₁,i₂)
/// cells of that slice within Ω. Ties break lexicographically on (i₁,i₂);
/// the least element and cells excluded from Ω are skipped, taking the next
/// ranked cell. Order-3 tensors only.
pub fn basis_b3(p: &NormalizedTensor, l: usize) -> Result<Basis> {
    let space = p.space();
    let shape = space.shape();
    if shape.order() != 3 {
        return Err(Error::InvalidInput(format!(
            "this basis family is defined for third-order tensors, got order {}",
            shape.order()
        )));
    }
    let slice_cells = shape.dims()[0] * shape.dims()[1];
    if l < 1 || l > slice_cells {
        return Err(Error::InvalidInput(format!(
            "l = {l} is out of range 1..={slice_cells}"
        )));
    }
    // Bucket Ω members by frontal slice. Within one slice, ordinal order is
    // already lexicographic on (i1, i2), which is the tie-break order.
    let mut slices: Vec<Vec<(f64, usize)>> = vec![Vec::new(); shape.dims()[2]];
    for (ordinal, v) in space.iter().enumerate() {
        let i3 = v.components()[2];
        slices[i3 - 1].push((p.prob(ordinal), space.code(ordinal)));
    }
    let mut codes = BTreeSet::new();
    for slice in &mut slices {
        slice.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, code) in slice.iter().filter(|&&(_, code)| code != 0).take(l) {
            codes.insert(code);
        }
    }
    Ok(Basis::from_codes(space.clone(), codes.into_iter().collect()))
}

/// Parse a basis file: one index vector per line, 1-based, whitespace
/// separated, `#` comments. Duplicates collapse.
pub fn load_basis_file(source: impl Read, space: &Arc<SampleSpace>) -> Result<Basis> {
    let lines = Lines::read(source)?;
    let arity = space.shape().order();
    let mut members = Vec::new();
    for (no, line) in lines.iter() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != arity {
            return Err(Error::parse(
                no,
                format!("expected {} indices, got {}", arity, toks.len()),
            ));
        }
        let mut comps = Vec::with_capacity(arity);
        for tok in &toks {
            comps.push(parse_index(no, tok)?);
        }
        let v = IndexVector::new(comps);
        if v.is_least() {
            return Err(Error::parse(no, "the least element (1,...,1) cannot be a basis member".to_string()));
        }
        if space.position(&v).is_none() {
            return Err(Error::parse(no, format!("{v} is not in the sample space")));
        }
        members.push(v);
    }
    Basis::from_members(space.clone(), members)
}

/// One term of a basis specification string.
///
/// The grammar is `b1`, `b2:<l>`, `b3:<l>`, or `file:<path>`, with terms
/// joined by `+` for unions, e.g. `b1+b2:3+b3:5`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BasisSpec {
    B1,
    B2(usize),
    B3(usize),
    File(PathBuf),
}

impl BasisSpec {
    /// Parse a union specification into its terms.
    pub fn parse_union(s: &str) -> Result<Vec<BasisSpec>> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::InvalidInput("empty basis specification".into()));
        }
        s.split('+').map(|term| Self::parse_term(term.trim())).collect()
    }

    fn parse_term(term: &str) -> Result<BasisSpec> {
        if term == "b1" {
            return Ok(BasisSpec::B1);
        }
        if let Some(arg) = term.strip_prefix("b2:") {
            let l = arg
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad b2 parameter '{arg}'")))?;
            return Ok(BasisSpec::B2(l));
        }
        if let Some(arg) = term.strip_prefix("b3:") {
            let l = arg
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad b3 parameter '{arg}'")))?;
            return Ok(BasisSpec::B3(l));
        }
        if let Some(path) = term.strip_prefix("file:") {
            if path.is_empty() {
                return Err(Error::InvalidInput("empty basis file path".into()));
            }
            return Ok(BasisSpec::File(PathBuf::from(path)));
        }
        Err(Error::InvalidInput(format!(
            "unknown basis term '{term}' (expected b1, b2:<l>, b3:<l>, or file:<path>)"
        )))
    }

    /// Resolve a union of terms against a sample space. `b3` ranks cells by
    /// probability, so it needs the normalized tensor.
    pub fn resolve(
        specs: &[BasisSpec],
        space: &Arc<SampleSpace>,
        p: Option<&NormalizedTensor>,
    ) -> Result<Basis> {
        let mut codes: BTreeSet<usize> = BTreeSet::new();
        for spec in specs {
            let part = match spec {
                BasisSpec::B1 => basis_b1(space),
                BasisSpec::B2(l) => basis_b2(space, *l)?,
                BasisSpec::B3(l) => {
                    let p = p.ok_or_else(|| {
                        Error::InvalidInput("b3 ranks entries by probability and needs the input tensor".into())
                    })?;
                    basis_b3(p, *l)?
                }
                BasisSpec::File(path) => {
                    let file = std::fs::File::open(path)?;
                    load_basis_file(file, space)?
                }
            };
            codes.extend(part.codes().iter().copied());
        }
        Ok(Basis::from_codes(space.clone(), codes.into_iter().collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{RawTensor, Shape};
    use rand_xoshiro::rand_core::{RngCore, SeedableRng};
    use rand_xoshiro::Xoshiro256StarStar;

    fn shape(dims: &[usize]) -> Shape {
        Shape::new(dims.to_vec()).unwrap()
    }

    fn iv(comps: &[usize]) -> IndexVector {
        IndexVector::new(comps.to_vec())
    }

    fn full(dims: &[usize]) -> Arc<SampleSpace> {
        SampleSpace::full(shape(dims))
    }

    #[test]
    fn leq_examples() {
        assert!(leq(&iv(&[1, 1]), &iv(&[2, 2])).unwrap());
        assert!(!leq(&iv(&[2, 1]), &iv(&[1, 2])).unwrap());
        assert!(leq(&iv(&[2, 2]), &iv(&[2, 2])).unwrap());
        assert!(matches!(
            leq(&iv(&[1, 1]), &iv(&[1, 1, 1])),
            Err(Error::ArityMismatch { .. })
        ));
    }

    #[test]
    fn partial_order_axioms_hold_on_random_triples() {
        // 10^4 random triples from a small grid so comparable pairs are common.
        let mut rng = Xoshiro256StarStar::seed_from_u64(11);
        let draw = |rng: &mut Xoshiro256StarStar| {
            iv(&[
                (rng.next_u64() % 3 + 1) as usize,
                (rng.next_u64() % 3 + 1) as usize,
                (rng.next_u64() % 3 + 1) as usize,
            ])
        };
        for _ in 0..10_000 {
            let u = draw(&mut rng);
            let v = draw(&mut rng);
            let w = draw(&mut rng);
            assert!(leq(&u, &u).unwrap(), "reflexivity");
            if leq(&u, &v).unwrap() && leq(&v, &u).unwrap() {
                assert_eq!(u, v, "antisymmetry");
            }
            if leq(&u, &v).unwrap() && leq(&v, &w).unwrap() {
                assert!(leq(&u, &w).unwrap(), "transitivity");
            }
        }
    }

    #[test]
    fn incidence_matches_the_order() {
        let space = full(&[2, 2]);
        let basis =
            Basis::from_members(space.clone(), vec![iv(&[1, 2]), iv(&[2, 1])]).unwrap();
        let inc = ZetaIncidence::new(Arc::new(basis));
        // Row (1,2) marks {(1,2),(2,2)}; row (2,1) marks {(2,1),(2,2)}.
        let marks = |r: usize| -> Vec<usize> {
            (0..4).filter(|&j| inc.bit(r, j)).collect()
        };
        assert_eq!(marks(0), vec![1, 3]);
        assert_eq!(marks(1), vec![2, 3]);
        // The least element's column is empty: no basis member is below it.
        assert!(!inc.bit(0, 0) && !inc.bit(1, 0));
    }

    #[test]
    fn empty_basis_has_empty_incidence() {
        let space = full(&[2, 2]);
        let basis = Basis::from_members(space, vec![]).unwrap();
        let inc = ZetaIncidence::new(Arc::new(basis));
        assert_eq!(inc.basis().len(), 0);
    }

    #[test]
    fn incidence_agrees_with_brute_force_on_random_spaces() {
        let mut rng = Xoshiro256StarStar::seed_from_u64(5);
        for _ in 0..20 {
            let dims = [
                (rng.next_u64() % 3 + 2) as usize,
                (rng.next_u64() % 3 + 2) as usize,
                (rng.next_u64() % 2 + 1) as usize,
            ];
            let space = full(&dims);
            // Random subset of Ω⁺ as basis.
            let members: Vec<IndexVector> = space
                .iter()
                .skip(1)
                .filter(|_| rng.next_u64() % 3 == 0)
                .collect();
            let basis = Arc::new(Basis::from_members(space.clone(), members).unwrap());
            let inc = ZetaIncidence::new(basis.clone());
            for r in 0..basis.len() {
                let u = basis.member(r);
                for j in 0..space.len() {
                    let v = space.member(j);
                    assert_eq!(inc.bit(r, j), leq(&u, &v).unwrap(), "u={u} v={v}");
                }
            }
        }
    }

    #[test]
    fn down_set_examples() {
        let space = full(&[2, 2]);
        let basis =
            Basis::from_members(space.clone(), vec![iv(&[1, 2]), iv(&[2, 1])]).unwrap();
        assert_eq!(down_set(&iv(&[2, 2]), &basis), vec![iv(&[1, 2]), iv(&[2, 1])]);
        assert_eq!(down_set(&iv(&[1, 1]), &basis), vec![]);
        assert_eq!(down_set(&iv(&[1, 2]), &basis), vec![iv(&[1, 2])]);
    }

    #[test]
    fn up_set_examples() {
        let space = full(&[2, 2]);
        assert_eq!(up_set(&iv(&[1, 2]), &space), vec![iv(&[1, 2]), iv(&[2, 2])]);
        assert_eq!(up_set(&iv(&[2, 2]), &space), vec![iv(&[2, 2])]);

        let excl = [iv(&[2, 2])];
        let space = SampleSpace::excluding(shape(&[2, 2]), excl.iter()).unwrap();
        assert_eq!(up_set(&iv(&[1, 2]), &space), vec![iv(&[1, 2])]);
    }

    #[test]
    fn b1_examples() {
        let b = basis_b1(&full(&[2, 2, 2]));
        let members: Vec<IndexVector> = b.iter().collect();
        assert_eq!(members, vec![iv(&[1, 1, 2]), iv(&[1, 2, 1]), iv(&[2, 1, 1])]);

        assert_eq!(basis_b1(&full(&[3, 3, 3])).len(), 6);
    }

    #[test]
    fn b1_count_matches_brute_force() {
        // Independent oracle: enumerate Ω⁺ and keep vectors with exactly one
        // component > 1.
        for dims in [[2usize, 3, 4], [5, 2, 2], [4, 4, 4]] {
            let space = full(&dims);
            let expected: Vec<IndexVector> = space
                .iter()
                .filter(|v| v.components().iter().filter(|&&c| c > 1).count() == 1)
                .collect();
            let b = basis_b1(&space);
            let members: Vec<IndexVector> = b.iter().collect();
            assert_eq!(members, expected);
            assert_eq!(b.len(), dims.iter().map(|d| d - 1).sum::<usize>());
        }
    }

    #[test]
    fn b2_examples() {
        let b = basis_b2(&full(&[4, 4, 1]), 2).unwrap();
        let members: Vec<IndexVector> = b.iter().collect();
        assert_eq!(
            members,
            vec![iv(&[1, 2, 1]), iv(&[1, 4, 1]), iv(&[2, 1, 1]), iv(&[4, 1, 1])]
        );

        let b = basis_b2(&full(&[4, 4, 1]), 1).unwrap();
        let members: Vec<IndexVector> = b.iter().collect();
        assert_eq!(members, vec![iv(&[1, 4, 1]), iv(&[4, 1, 1])]);

        assert!(basis_b2(&full(&[4, 4, 1]), 5).is_err());
        assert!(basis_b2(&full(&[4, 4, 1]), 0).is_err());
    }

    #[test]
    fn b2_uses_the_floor_truncation() {
        // ⌊5/2⌋ = 2, so C(2) = {2, 4} and index 5 never appears.
        let b = basis_b2(&full(&[5, 5, 1]), 2).unwrap();
        let members: Vec<IndexVector> = b.iter().collect();
        assert_eq!(
            members,
            vec![iv(&[1, 2, 1]), iv(&[1, 4, 1]), iv(&[2, 1, 1]), iv(&[4, 1, 1])]
        );
    }

    #[test]
    fn b2_bound_holds() {
        for l in 1..=4 {
            let b = basis_b2(&full(&[4, 6, 3]), l).unwrap();
            assert!(b.len() <= 2 * l);
        }
    }

    fn normalized(dims: &[usize], values: Vec<f64>) -> NormalizedTensor {
        let t = RawTensor::from_dense(shape(dims), values).unwrap();
        NormalizedTensor::normalize(&t, full(dims)).unwrap()
    }

    #[test]
    fn b3_skips_the_least_element() {
        // Slice probabilities [[.4,.1],[.3,.2]]: the top cell is (1,1,1),
        // which is the least element, so the next ranked (2,1,1) is taken.
        let p = normalized(&[2, 2, 1], vec![0.4, 0.1, 0.3, 0.2]);
        let b = basis_b3(&p, 1).unwrap();
        let members: Vec<IndexVector> = b.iter().collect();
        assert_eq!(members, vec![iv(&[2, 1, 1])]);
    }

    #[test]
    fn b3_saturates_to_the_whole_slice() {
        let p = normalized(&[2, 2, 1], vec![0.4, 0.1, 0.3, 0.2]);
        let b = basis_b3(&p, 4).unwrap();
        let members: Vec<IndexVector> = b.iter().collect();
        assert_eq!(members, vec![iv(&[1, 2, 1]), iv(&[2, 1, 1]), iv(&[2, 2, 1])]);
    }

    #[test]
    fn b3_breaks_ties_lexicographically() {
        let p = normalized(&[2, 2, 1], vec![0.25; 4]);
        let b = basis_b3(&p, 2).unwrap();
        let members: Vec<IndexVector> = b.iter().collect();
        assert_eq!(members, vec![iv(&[1, 2, 1]), iv(&[2, 1, 1])]);
    }

    #[test]
    fn b3_rejects_other_orders() {
        let p = normalized(&[2, 2], vec![0.25; 4]);
        assert!(matches!(basis_b3(&p, 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn b3_per_slice_and_size_bound() {
        let p = normalized(&[3, 3, 4], (1..=36).map(|v| v as f64).collect());
        for l in 1..=4 {
            let b = basis_b3(&p, l).unwrap();
            assert!(b.len() <= l * 4);
            assert!(b.codes().iter().all(|&c| c != 0));
        }
    }

    #[test]
    fn b3_skips_cells_excluded_from_omega() {
        // (2,2,1) has the highest value but is excluded, so (2,1,1) wins.
        let t = RawTensor::from_dense(shape(&[2, 2, 1]), vec![0.0, 0.1, 0.3, 5.0]).unwrap();
        let excl = [iv(&[2, 2, 1])];
        let space = SampleSpace::excluding(shape(&[2, 2, 1]), excl.iter()).unwrap();
        let p = NormalizedTensor::normalize(&t, space).unwrap();
        let b = basis_b3(&p, 1).unwrap();
        let members: Vec<IndexVector> = b.iter().collect();
        assert_eq!(members, vec![iv(&[2, 1, 1])]);
    }

    #[test]
    fn families_stay_inside_omega_plus() {
        let t = crate::eval::synthetic_tensor(shape(&[4, 4, 4]), 3);
        let space = full(&[4, 4, 4]);
        let p = NormalizedTensor::normalize(&t, space.clone()).unwrap();
        for b in [
            basis_b1(&space),
            basis_b2(&space, 2).unwrap(),
            basis_b3(&p, 3).unwrap(),
        ] {
            assert!(b.codes().iter().all(|&c| c != 0), "least element crept in");
            assert!(b.iter().all(|v| space.position(&v).is_some()));
        }
    }

    #[test]
    fn basis_file_round_trip_and_errors() {
        let space = full(&[2, 2]);
        let b = load_basis_file("1 2\n2 1\n".as_bytes(), &space).unwrap();
        let members: Vec<IndexVector> = b.iter().collect();
        assert_eq!(members, vec![iv(&[1, 2]), iv(&[2, 1])]);

        // Duplicates collapse.
        let b = load_basis_file("2 1\n2 1\n# note\n".as_bytes(), &space).unwrap();
        assert_eq!(b.len(), 1);

        let err = load_basis_file("1 1\n".as_bytes(), &space).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");

        let err = load_basis_file("3 1\n".as_bytes(), &space).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");

        let err = load_basis_file("1 2 1\n".as_bytes(), &space).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn spec_strings_parse_and_resolve() {
        let specs = BasisSpec::parse_union("b1+b2:3").unwrap();
        assert_eq!(specs, vec![BasisSpec::B1, BasisSpec::B2(3)]);
        assert!(BasisSpec::parse_union("b4").is_err());
        assert!(BasisSpec::parse_union("b2:x").is_err());
        assert!(BasisSpec::parse_union("").is_err());

        let space = full(&[4, 4, 4]);
        let union = BasisSpec::resolve(&specs, &space, None).unwrap();
        let b1 = basis_b1(&space);
        let b2 = basis_b2(&space, 3).unwrap();
        let mut expected: BTreeSet<usize> = b1.codes().iter().copied().collect();
        expected.extend(b2.codes().iter().copied());
        assert_eq!(union.codes(), expected.into_iter().collect::<Vec<_>>());

        // b3 without probabilities is refused.
        let err = BasisSpec::resolve(&[BasisSpec::B3(2)], &space, None).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn up_set_never_returns_excluded_members() {
        let mut rng = Xoshiro256StarStar::seed_from_u64(9);
        let dims = [3usize, 3, 3];
        let all: Vec<IndexVector> = SampleSpace::full(shape(&dims)).iter().collect();
        for _ in 0..20 {
            let excl: Vec<IndexVector> = all
                .iter()
                .filter(|v| !v.is_least() && rng.next_u64() % 4 == 0)
                .cloned()
                .collect();
            let space = SampleSpace::excluding(shape(&dims), excl.iter()).unwrap();
            for v in space.iter() {
                for u in up_set(&v, &space) {
                    assert!(space.position(&u).is_some());
                    assert!(!excl.contains(&u));
                }
            }
        }
    }
}
