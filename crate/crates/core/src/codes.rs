//! Symbol vectors and the similarity functions used for associative decoding.
//!
//! A [`SymbolVector`] is a fixed-length array of small non-negative integers
//! where `0` means "no symbol at this position". Two similarity functions are
//! provided: the real scalar product (the synaptic-current form) and the
//! non-zero match ratio used by the associative fields.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance under which two scores count as equal when building
/// a max-set.
pub const EPS_SCORE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct SymbolVector(Vec<u32>);

impl SymbolVector {
    pub fn new(components: Vec<u32>) -> Self {
        SymbolVector(components)
    }

    /// Builds a vector and checks every component against `bound`.
    pub fn bounded(components: Vec<u32>, bound: u32) -> Result<Self> {
        if let Some(c) = components.iter().find(|&&c| c > bound) {
            return Err(Error::Config(format!(
                "component {c} exceeds alphabet bound {bound}"
            )));
        }
        Ok(SymbolVector(components))
    }

    /// The all-zero vector, read as NULL.
    pub fn null(dim: usize) -> Self {
        SymbolVector(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_null(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn components(&self) -> &[u32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<u32> {
        self.0
    }

    /// Concatenates field vectors into one vector with fixed offsets.
    pub fn concat(parts: &[&SymbolVector]) -> Self {
        SymbolVector(parts.iter().flat_map(|p| p.0.iter().copied()).collect())
    }

    /// Returns the sub-vector covering `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        SymbolVector(self.0[range].to_vec())
    }

    pub fn as_reals(&self) -> Vec<f64> {
        self.0.iter().map(|&c| f64::from(c)).collect()
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

impl From<Vec<u32>> for SymbolVector {
    fn from(v: Vec<u32>) -> Self {
        SymbolVector(v)
    }
}

impl<const N: usize> From<[u32; N]> for SymbolVector {
    fn from(v: [u32; N]) -> Self {
        SymbolVector(v.to_vec())
    }
}

impl fmt::Display for SymbolVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Similarity {
    /// `Σ x_j · g_j` with components read as reals.
    ScalarProduct,
    /// Matching non-zero positions of `x` divided by the non-zero positions
    /// of `x`; zero for an all-zero `x`.
    #[default]
    NonzeroMatchRatio,
}

impl Similarity {
    pub fn score(self, x: &SymbolVector, g: &SymbolVector) -> Result<f64> {
        similarity(x, g, self)
    }
}

pub fn similarity(x: &SymbolVector, g: &SymbolVector, kind: Similarity) -> Result<f64> {
    g.check_dim(x.dim())?;
    Ok(match kind {
        Similarity::ScalarProduct => x
            .0
            .iter()
            .zip(&g.0)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum(),
        Similarity::NonzeroMatchRatio => {
            let mut matches = 0u32;
            let mut nonzero = 0u32;
            for (&a, &b) in x.0.iter().zip(&g.0) {
                if a != 0 {
                    nonzero += 1;
                    if a == b {
                        matches += 1;
                    }
                }
            }
            if nonzero == 0 {
                0.0
            } else {
                f64::from(matches) / f64::from(nonzero)
            }
        }
    })
}

/// Outcome of [`correct_decoding_check`].
#[derive(Debug, Clone, PartialEq)]
pub enum DecodingVerdict {
    Pass,
    /// `f(x, x_prime) >= f(x, x)` for this pair.
    Fail {
        x: SymbolVector,
        x_prime: SymbolVector,
        self_score: f64,
        cross_score: f64,
    },
}

impl DecodingVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, DecodingVerdict::Pass)
    }
}

/// Checks strict self-maximality of `kind` over the code set `codes`:
/// every distinct `x' ≠ x` must score strictly below `x` against itself.
///
/// Scores closer than [`EPS_SCORE`] count as a violation, since the
/// max-set construction would treat them as tied.
pub fn correct_decoding_check(codes: &[SymbolVector], kind: Similarity) -> Result<DecodingVerdict> {
    let Some(first) = codes.first() else {
        return Ok(DecodingVerdict::Pass);
    };
    for c in codes {
        c.check_dim(first.dim())?;
    }
    for x in codes {
        let self_score = similarity(x, x, kind)?;
        for x_prime in codes {
            if x_prime == x {
                continue;
            }
            let cross_score = similarity(x, x_prime, kind)?;
            if cross_score > self_score - EPS_SCORE {
                return Ok(DecodingVerdict::Fail {
                    x: x.clone(),
                    x_prime: x_prime.clone(),
                    self_score,
                    cross_score,
                });
            }
        }
    }
    Ok(DecodingVerdict::Pass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sv<const N: usize>(v: [u32; N]) -> SymbolVector {
        SymbolVector::from(v)
    }

    #[test]
    fn ratio_counts_nonzero_matches() {
        let s = similarity(&sv([1, 2, 0, 3]), &sv([1, 5, 7, 3]), Similarity::NonzeroMatchRatio).unwrap();
        assert_eq!(s, 2.0 / 3.0);
    }

    #[test]
    fn ratio_of_null_input_is_zero() {
        let s = similarity(&sv([0, 0, 0]), &sv([1, 2, 3]), Similarity::NonzeroMatchRatio).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn scalar_product() {
        let s = similarity(&sv([1, 0, 1]), &sv([1, 1, 1]), Similarity::ScalarProduct).unwrap();
        assert_eq!(s, 2.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let err = similarity(&sv([1, 0]), &sv([1, 1, 1]), Similarity::ScalarProduct).unwrap_err();
        assert_eq!(err, Error::Dimension { expected: 2, got: 3 });
    }

    #[test]
    fn bounded_rejects_large_components() {
        assert!(SymbolVector::bounded(vec![1, 4], 3).is_err());
        assert!(SymbolVector::bounded(vec![1, 3], 3).is_ok());
    }

    #[test]
    fn ratio_is_asymmetric_on_a_witness() {
        let x = sv([1, 0]);
        let g = sv([1, 5]);
        let k = Similarity::NonzeroMatchRatio;
        assert_eq!(similarity(&x, &g, k).unwrap(), 1.0);
        assert_eq!(similarity(&g, &x, k).unwrap(), 0.5);
    }

    #[test]
    fn one_hot_codes_decode_correctly() {
        let v = correct_decoding_check(&[sv([1, 0]), sv([0, 1])], Similarity::ScalarProduct).unwrap();
        assert!(v.passed());
    }

    #[test]
    fn nested_codes_fail_scalar_product() {
        let v = correct_decoding_check(&[sv([1, 0]), sv([1, 1])], Similarity::ScalarProduct).unwrap();
        match v {
            DecodingVerdict::Fail { x, x_prime, self_score, cross_score } => {
                assert_eq!((x, x_prime), (sv([1, 0]), sv([1, 1])));
                assert_eq!(self_score, 1.0);
                assert_eq!(cross_score, 1.0);
            }
            DecodingVerdict::Pass => panic!("expected a violation"),
        }
    }

    #[test]
    fn ratio_ignores_zero_positions() {
        let v = correct_decoding_check(&[sv([1, 0]), sv([1, 5])], Similarity::NonzeroMatchRatio).unwrap();
        assert!(matches!(v, DecodingVerdict::Fail { ref x, .. } if *x == sv([1, 0])));
    }

    #[test]
    fn empty_code_set_passes() {
        assert!(correct_decoding_check(&[], Similarity::ScalarProduct).unwrap().passed());
    }

    #[test]
    fn serializes_as_json_array() {
        assert_eq!(serde_json::to_string(&sv([1, 0, 2])).unwrap(), "[1,0,2]");
        let back: SymbolVector = serde_json::from_str("[3,4]").unwrap();
        assert_eq!(back, sv([3, 4]));
    }

    proptest! {
        #[test]
        fn scalar_product_is_symmetric(a in prop::collection::vec(0u32..5, 6), b in prop::collection::vec(0u32..5, 6)) {
            let (a, b) = (SymbolVector::new(a), SymbolVector::new(b));
            let k = Similarity::ScalarProduct;
            prop_assert_eq!(similarity(&a, &b, k).unwrap(), similarity(&b, &a, k).unwrap());
        }

        #[test]
        fn ratio_is_bounded_and_self_maximal(a in prop::collection::vec(0u32..5, 6), b in prop::collection::vec(0u32..5, 6)) {
            let (a, b) = (SymbolVector::new(a), SymbolVector::new(b));
            let k = Similarity::NonzeroMatchRatio;
            let s = similarity(&a, &b, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            if !a.is_null() {
                prop_assert_eq!(similarity(&a, &a, k).unwrap(), 1.0);
            }
        }
    }
}
