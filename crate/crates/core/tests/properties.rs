use proptest::prelude::*;

use pivq::assignment::{brute_force_assignment, solve_assignment, CostMatrix};
use pivq::capacity::{self, CapacityParams};
use pivq::io;
use pivq::quantizer::{matching_quantize, nearest_quantize, quantize_batch, Method, Metric};
use pivq::sampling::{interpolate, random_smooth_path, split_pair};
use pivq::types::euclidean_distance;
use pivq::{CodeSet, Codebook, Embedding, Execution, Rng};

fn embedding(dim: usize) -> impl Strategy<Value = Embedding> {
    prop::collection::vec(-10.0f64..10.0, dim).prop_map(|v| Embedding::new(v).unwrap())
}

fn cost_matrix() -> impl Strategy<Value = CostMatrix> {
    (1usize..=6)
        .prop_flat_map(|rows| (Just(rows), 1usize..=rows))
        .prop_flat_map(|(rows, cols)| {
            prop::collection::vec(0.0f64..1.0, rows * cols)
                .prop_map(move |v| CostMatrix::new(rows, cols, v).unwrap())
        })
}

/// Codebook of `k` entries plus `l ≤ k` embeddings, all of dimension `dim`.
fn instance() -> impl Strategy<Value = (Codebook, Vec<Embedding>)> {
    (1usize..=4, 1usize..=6)
        .prop_flat_map(|(dim, l)| (Just(dim), Just(l), l..=3 * l))
        .prop_flat_map(|(dim, l, k)| {
            (
                prop::collection::vec(embedding(dim), k).prop_map(|e| Codebook::new(e).unwrap()),
                prop::collection::vec(embedding(dim), l),
            )
        })
}

fn code_set(max: usize, len: usize) -> impl Strategy<Value = CodeSet> {
    prop::sample::subsequence((0..max).collect::<Vec<_>>(), len).prop_map(|v| CodeSet::new(v).unwrap())
}

proptest! {
    #[test]
    fn distance_is_a_metric(a in embedding(3), b in embedding(3), c in embedding(3)) {
        let ab = euclidean_distance(&a, &b).unwrap();
        let ba = euclidean_distance(&b, &a).unwrap();
        let ac = euclidean_distance(&a, &c).unwrap();
        let cb = euclidean_distance(&c, &b).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab >= 0.0);
        prop_assert!(ab <= ac + cb + 1e-12);
        prop_assert_eq!(euclidean_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn solver_matches_oracle(cost in cost_matrix()) {
        let fast = solve_assignment(&cost);
        let slow = brute_force_assignment(&cost).unwrap();
        prop_assert_eq!(&fast.mapping, &slow.mapping);
        prop_assert_eq!(fast.total_cost, slow.total_cost);
    }

    #[test]
    fn solver_is_injective(cost in cost_matrix()) {
        let a = solve_assignment(&cost);
        let mut seen = a.mapping.clone();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), cost.cols());
        prop_assert!(a.mapping.iter().all(|&r| r < cost.rows()));
    }

    #[test]
    fn solver_cost_scales(cost in cost_matrix(), shift in -5.0f64..5.0) {
        // Adding a constant to every entry leaves the optimal cost shifted by cols·c.
        let shifted: Vec<f64> = cost.values().iter().map(|v| v + shift).collect();
        let shifted = CostMatrix::new(cost.rows(), cost.cols(), shifted).unwrap();
        let a = solve_assignment(&cost).total_cost;
        let b = solve_assignment(&shifted).total_cost;
        prop_assert!((b - a - shift * cost.cols() as f64).abs() < 1e-9);
    }

    #[test]
    fn column_permutation_equivariance(cost in cost_matrix(), seed in any::<u64>()) {
        let (rows, cols) = (cost.rows(), cost.cols());
        let mut perm: Vec<usize> = (0..cols).collect();
        Rng::new(seed).shuffle(&mut perm);
        let mut values = vec![0.0; rows * cols];
        for r in 0..rows {
            for (j, &p) in perm.iter().enumerate() {
                values[r * cols + j] = cost.get(r, p);
            }
        }
        let permuted = CostMatrix::new(rows, cols, values).unwrap();
        let a = solve_assignment(&cost).total_cost;
        let b = solve_assignment(&permuted).total_cost;
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn matching_uses_exactly_l_codes((cb, zs) in instance()) {
        let m = matching_quantize(&cb, &zs).unwrap();
        prop_assert_eq!(m.code_set.len(), zs.len());
        prop_assert_eq!(m.per_image_usage(), zs.len());
        let n = nearest_quantize(&cb, &zs).unwrap();
        prop_assert!(n.code_set.len() <= zs.len());
        prop_assert!(m.code_set.iter().all(|c| c < cb.len()));
    }

    #[test]
    fn matching_never_beats_nearest((cb, zs) in instance()) {
        let total = |idx: &[usize]| -> f64 {
            zs.iter().zip(idx).map(|(z, &c)| {
                euclidean_distance(z, &Embedding::new(cb.entry(c).to_vec()).unwrap()).unwrap()
            }).sum()
        };
        let m = matching_quantize(&cb, &zs).unwrap();
        let n = nearest_quantize(&cb, &zs).unwrap();
        prop_assert!(total(&n.indices) <= total(&m.indices) + 1e-9);
    }

    #[test]
    fn shuffled_embeddings_keep_optimal_cost((cb, zs) in instance(), seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..zs.len()).collect();
        Rng::new(seed).shuffle(&mut order);
        let shuffled: Vec<Embedding> = order.iter().map(|&i| zs[i].clone()).collect();
        let a = matching_quantize(&cb, &zs).unwrap();
        let b = matching_quantize(&cb, &shuffled).unwrap();
        let a_cost: f64 = a.indices.iter().zip(&zs).map(|(&c, z)| {
            euclidean_distance(z, &Embedding::new(cb.entry(c).to_vec()).unwrap()).unwrap()
        }).sum();
        let b_cost: f64 = b.indices.iter().zip(&shuffled).map(|(&c, z)| {
            euclidean_distance(z, &Embedding::new(cb.entry(c).to_vec()).unwrap()).unwrap()
        }).sum();
        prop_assert!((a_cost - b_cost).abs() < 1e-9);
    }

    #[test]
    fn batch_modes_agree((cb, zs) in instance()) {
        let batch = vec![zs.clone(), zs];
        for method in [Method::Nearest, Method::Matching] {
            let s = quantize_batch(&cb, &batch, method, Metric::Euclidean, Execution::Sequential).unwrap();
            let p = quantize_batch(&cb, &batch, method, Metric::Euclidean, Execution::Parallel).unwrap();
            prop_assert_eq!(s, p);
        }
    }

    #[test]
    fn codebook_round_trips((cb, _) in instance()) {
        prop_assert_eq!(&io::codebook_from_bytes(&io::codebook_to_bytes(&cb).unwrap()).unwrap(), &cb);
        prop_assert_eq!(&io::codebook_from_json(&io::codebook_to_json(&cb).unwrap()).unwrap(), &cb);
        let zs = cb.to_embeddings();
        prop_assert_eq!(&io::embeddings_from_csv(&io::embeddings_to_csv(&zs)).unwrap(), &zs);
    }

    #[test]
    fn interpolant_properties(a in code_set(12, 5), b in code_set(12, 5), seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let pair = split_pair(&a, &b).unwrap();
        let both = a.union(&b);
        for _ in 0..5 {
            let out = interpolate(&a, &b, &mut rng).unwrap();
            prop_assert_eq!(out.len(), 5);
            prop_assert!(pair.common.is_subset(&out));
            prop_assert!(out.is_subset(&both));
        }
    }

    #[test]
    fn path_properties(a in code_set(12, 5), b in code_set(12, 5), seed in any::<u64>()) {
        let pair = split_pair(&a, &b).unwrap();
        let path = random_smooth_path(&pair, &mut Rng::new(seed)).unwrap();
        prop_assert_eq!(path.len(), pair.differing() + 1);
        prop_assert_eq!(path.first().unwrap(), &b);
        prop_assert_eq!(path.last().unwrap(), &a);
        for w in path.windows(2) {
            prop_assert_eq!(w[0].hamming(&w[1]), 2);
        }
    }

    #[test]
    fn capacity_is_monotone_in_k(k in 2u64..300, l in 1u64..40) {
        let l = l.min(k - 1);
        let small = capacity::matching_capacity_bits(k, l).unwrap();
        let large = capacity::matching_capacity_bits(k + 1, l).unwrap();
        prop_assert!(large > small);
        let kimg = l.min(3);
        let p = CapacityParams::new(k, kimg, l).unwrap();
        let bits = capacity::nearest_capacity_bits(&p).unwrap();
        prop_assert!(bits.is_finite() && bits >= 0.0);
    }
}
