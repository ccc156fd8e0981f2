//! Interpolation between code sets.
//!
//! Two samples `C_a`, `C_b` of equal size `L` split into their shared codes
//! `C_c = C_a ∩ C_b` and the exclusive codes `C_d = C_a △ C_b`. A random
//! interpolant keeps all of `C_c` and fills the remaining `L − |C_c|` slots
//! with codes drawn uniformly without replacement from `C_d`. A smooth path
//! walks from `C_b` to `C_a` one swap at a time.

use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{PivqError, Result};
use crate::rng::Rng;
use crate::types::CodeSet;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterpolationPair {
    /// `C_a ∩ C_b`.
    pub common: CodeSet,
    /// `(C_a ∖ C_b) ∪ (C_b ∖ C_a)`.
    pub exclusive: CodeSet,
    /// `C_a ∖ C_b`, ascending.
    pub side_a: Vec<usize>,
    /// `C_b ∖ C_a`, ascending.
    pub side_b: Vec<usize>,
}

impl InterpolationPair {
    /// `|R|`, the number of codes that differ on each side.
    pub fn differing(&self) -> usize {
        self.side_a.len()
    }

    pub fn set_a(&self) -> CodeSet {
        let mut codes: Vec<usize> = self.common.iter().chain(self.side_a.iter().copied()).collect();
        codes.sort_unstable();
        CodeSet::new(codes).expect("disjoint parts")
    }

    pub fn set_b(&self) -> CodeSet {
        let mut codes: Vec<usize> = self.common.iter().chain(self.side_b.iter().copied()).collect();
        codes.sort_unstable();
        CodeSet::new(codes).expect("disjoint parts")
    }
}

pub fn split_pair(a: &CodeSet, b: &CodeSet) -> Result<InterpolationPair> {
    if a.len() != b.len() {
        return Err(PivqError::SizeMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    let side_a = a.difference(b);
    let side_b = b.difference(a);
    Ok(InterpolationPair {
        common: a.intersection(b),
        exclusive: side_a.union(&side_b),
        side_a: side_a.into(),
        side_b: side_b.into(),
    })
}

/// Draws one interpolant of `a` and `b`.
pub fn interpolate(a: &CodeSet, b: &CodeSet, rng: &mut Rng) -> Result<CodeSet> {
    let pair = split_pair(a, b)?;
    let len = a.len();
    let mut out: Vec<usize> = pair.common.codes().to_vec();
    let mut pool: Vec<usize> = pair.exclusive.into();
    for _ in 0..len - out.len() {
        let pick = rng.below(pool.len());
        out.push(pool.swap_remove(pick));
    }
    CodeSet::new(out)
}

/// Every set on the path `t = 0..=|R|`: element `t` is
/// `common ∪ first t of perm_a ∪ last |R| − t of perm_b`, so element 0 is
/// `C_b` and element `|R|` is `C_a`.
///
/// `perm_a` and `perm_b` are orderings of `pair.side_a` and `pair.side_b`.
pub fn smooth_path(
    pair: &InterpolationPair,
    perm_a: &[usize],
    perm_b: &[usize],
) -> Result<Vec<CodeSet>> {
    check_permutation(&pair.side_a, perm_a)?;
    check_permutation(&pair.side_b, perm_b)?;
    let r = pair.differing();
    (0..=r)
        .map(|t| {
            let codes = pair
                .common
                .iter()
                .chain(perm_a[..t].iter().copied())
                .chain(perm_b[t..].iter().copied())
                .collect();
            CodeSet::new(codes)
        })
        .collect()
}

/// Smooth path with both sides shuffled by `rng`.
pub fn random_smooth_path(pair: &InterpolationPair, rng: &mut Rng) -> Result<Vec<CodeSet>> {
    let mut perm_a = pair.side_a.clone();
    let mut perm_b = pair.side_b.clone();
    rng.shuffle(&mut perm_a);
    rng.shuffle(&mut perm_b);
    smooth_path(pair, &perm_a, &perm_b)
}

fn check_permutation(side: &[usize], perm: &[usize]) -> Result<()> {
    let mut sorted = perm.to_vec();
    sorted.sort_unstable();
    if sorted != side {
        return Err(PivqError::invalid(format!(
            "{perm:?} is not a permutation of {side:?}"
        )));
    }
    Ok(())
}

/// Number of distinct smooth paths, `(|R|!)²`.
pub fn count_paths(differing: u64) -> BigUint {
    let fact: BigUint = (1..=differing).fold(BigUint::one(), |acc, i| acc * i);
    &fact * &fact
}
