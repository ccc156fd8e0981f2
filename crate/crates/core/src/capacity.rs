//! Information-capacity bounds of discrete bottlenecks, in bits.
//!
//! All binomials are exact big integers; only the final `log2` is floating
//! point.
//!
//! * nearest-neighbour quantization, `K_img` distinct codes out of `K_data`
//!   per sample of length `L`:
//!   `log2[ C(K_data, K_img) · C(L + K_img − 1, K_img − 1) ]`
//! * matching quantization, always `L` distinct codes: `log2 C(K_data, L)`
//! * position-dependent VQ: `L · log2 K`

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{PivqError, Result};
use crate::par::{self, Execution};

/// Exact `n! / (r! (n − r)!)`; zero when `r > n`.
pub fn binomial(n: u64, r: u64) -> BigUint {
    if r > n {
        return BigUint::zero();
    }
    let r = r.min(n - r);
    let mut acc = BigUint::one();
    // acc = C(n − r + i, i) after step i, so each division is exact.
    for i in 1..=r {
        acc *= n - r + i;
        acc /= i;
    }
    acc
}

/// `log2 x` from the bit length and the top 64 bits.
pub fn log2_of(x: &BigUint) -> Result<f64> {
    if x.is_zero() {
        return Err(PivqError::invalid("log2 of zero"));
    }
    let bits = x.bits();
    let shift = bits.saturating_sub(64);
    let top = (x >> shift).to_u64().expect("at most 64 bits after shift");
    Ok((top as f64).log2() + shift as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapacityParams {
    /// Codes used over the whole dataset.
    pub k_data: u64,
    /// Largest number of distinct codes in one sample.
    pub k_img: u64,
    /// Representation length.
    pub len: u64,
}

impl CapacityParams {
    pub fn new(k_data: u64, k_img: u64, len: u64) -> Result<Self> {
        if k_data == 0 || k_img == 0 || len == 0 {
            return Err(PivqError::invalid("capacity parameters must be positive"));
        }
        if k_img > k_data {
            return Err(PivqError::invalid(format!("K_img {k_img} exceeds K_data {k_data}")));
        }
        if k_img > len {
            return Err(PivqError::invalid(format!("K_img {k_img} exceeds L {len}")));
        }
        Ok(CapacityParams { k_data, k_img, len })
    }
}

/// `|S| = C(K_data, K_img)`: ways to pick the working subset of codes.
pub fn working_subset_count(p: &CapacityParams) -> BigUint {
    binomial(p.k_data, p.k_img)
}

/// `|R| = C(L + K_img − 1, K_img − 1)`: length-`L` multisets over `K_img`
/// symbols (stars and bars).
pub fn multiset_count(len: u64, k_img: u64) -> Result<BigUint> {
    if k_img == 0 {
        return Err(PivqError::invalid("K_img must be at least 1"));
    }
    Ok(binomial(len + k_img - 1, k_img - 1))
}

pub fn nearest_capacity_bits(p: &CapacityParams) -> Result<f64> {
    let product = working_subset_count(p) * multiset_count(p.len, p.k_img)?;
    log2_of(&product)
}

pub fn matching_capacity_bits(k_data: u64, len: u64) -> Result<f64> {
    if len > k_data {
        return Err(PivqError::invalid(format!("L {len} exceeds K_data {k_data}")));
    }
    log2_of(&binomial(k_data, len))
}

pub fn standard_vq_capacity_bits(k: u64, len: u64) -> Result<f64> {
    if k == 0 {
        return Err(PivqError::invalid("K must be at least 1"));
    }
    Ok(len as f64 * (k as f64).log2())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub len: u64,
    pub standard: f64,
    /// Nearest-neighbour bound with `K_img = min(K_img, L)`.
    pub nearest: f64,
    /// `None` when `L > K`.
    pub matching: Option<f64>,
}

/// Capacity of the three schemes over a sweep of representation lengths,
/// with `K_data = K`.
pub fn capacity_curve(
    k: u64,
    k_img_nearest: u64,
    lens: &[u64],
    exec: Execution,
) -> Result<Vec<CapacityRow>> {
    if k == 0 || k_img_nearest == 0 {
        return Err(PivqError::invalid("K and K_img must be positive"));
    }
    par::map(exec, lens, |&len| -> Result<CapacityRow> {
        if len == 0 {
            return Err(PivqError::invalid("L must be positive"));
        }
        let k_img = k_img_nearest.min(len).min(k);
        Ok(CapacityRow {
            len,
            standard: standard_vq_capacity_bits(k, len)?,
            nearest: nearest_capacity_bits(&CapacityParams::new(k, k_img, len)?)?,
            matching: (len <= k).then(|| matching_capacity_bits(k, len)).transpose()?,
        })
    })
    .into_iter()
    .collect()
}

/// Which representation space [`enumerate_representations`] counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    /// Length-`L` multisets over `K_data` symbols with at most `K_img`
    /// distinct symbols.
    Nearest { k_img: u64 },
    /// `L`-subsets of `K_data` symbols.
    Matching,
}

pub const ENUMERATION_MAX_K: u64 = 8;
pub const ENUMERATION_MAX_LEN: u64 = 6;

/// Counts distinct representations by explicit enumeration. Small instances
/// only (`K_data ≤ 8`, `L ≤ 6`).
pub fn enumerate_representations(k_data: u64, len: u64, model: Model) -> Result<u64> {
    if k_data > ENUMERATION_MAX_K || len > ENUMERATION_MAX_LEN {
        return Err(PivqError::TooLarge(format!(
            "K_data={k_data}, L={len} (limits {ENUMERATION_MAX_K}, {ENUMERATION_MAX_LEN})"
        )));
    }
    Ok(match model {
        Model::Matching => enumerate_subsets(k_data, len),
        Model::Nearest { k_img } => {
            let mut count = 0;
            for_each_multiset(k_data, len, &mut |m| {
                if distinct_in_sorted(m) as u64 <= k_img {
                    count += 1;
                }
            });
            count
        }
    })
}

/// Number of `size`-subsets of `{0..n}`, by scanning bitmasks.
pub fn enumerate_subsets(n: u64, size: u64) -> u64 {
    assert!(n < 64);
    (0u64..1 << n).filter(|m| m.count_ones() as u64 == size).count() as u64
}

/// Number of length-`len` multisets over `symbols` symbols, by listing them.
pub fn enumerate_multisets(symbols: u64, len: u64) -> u64 {
    let mut count = 0;
    for_each_multiset(symbols, len, &mut |_| count += 1);
    count
}

/// Visits every non-decreasing sequence of length `len` over `0..symbols`.
fn for_each_multiset(symbols: u64, len: u64, visit: &mut dyn FnMut(&[u64])) {
    fn rec(symbols: u64, len: usize, lo: u64, seq: &mut Vec<u64>, visit: &mut dyn FnMut(&[u64])) {
        if seq.len() == len {
            visit(seq);
            return;
        }
        for s in lo..symbols {
            seq.push(s);
            rec(symbols, len, s, seq, visit);
            seq.pop();
        }
    }
    rec(symbols, len as usize, 0, &mut Vec::new(), visit);
}

fn distinct_in_sorted(seq: &[u64]) -> usize {
    if seq.is_empty() {
        return 0;
    }
    1 + seq.windows(2).filter(|w| w[0] != w[1]).count()
}
