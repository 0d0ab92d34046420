use proptest::prelude::*;
use randlora::randbasis::{collinearity_monte_carlo, collinearity_probability};
use randlora::{BasisConfig, BasisSet, Distribution};

fn ternary_counts(set: &BasisSet) -> (usize, usize, usize) {
    let (mut neg, mut zero, mut pos) = (0, 0, 0);
    for m in set.b_stack().iter().chain(set.a_stack()) {
        for v in m.iter() {
            match v.partial_cmp(&0.0).unwrap() {
                std::cmp::Ordering::Less => neg += 1,
                std::cmp::Ordering::Equal => zero += 1,
                std::cmp::Ordering::Greater => pos += 1,
            }
        }
    }
    (neg, zero, pos)
}

fn within_3_sigma(count: usize, total: usize, p: f64) -> bool {
    let n = total as f64;
    let se = (p * (1.0 - p) / n).sqrt();
    (count as f64 / n - p).abs() <= 3.0 * se
}

#[test]
fn ternary_s27_marginals_at_768() {
    let set = BasisSet::generate(BasisConfig::new(3, Distribution::Ternary { s: 27 }, 8, 4, 768, 768)).unwrap();
    let (neg, zero, pos) = ternary_counts(&set);
    let total = neg + zero + pos;
    assert!(within_3_sigma(zero, total, 1.0 - 2.0 / 27.0), "zero fraction {}", zero as f64 / total as f64);
}

#[test]
fn ternary_marginals_over_1e5_entries() {
    for (s, seed) in [(3u64, 1u64), (10, 2), (27, 3)] {
        let set = BasisSet::generate(BasisConfig::new(seed, Distribution::Ternary { s }, 32, 4, 768, 768)).unwrap();
        let (neg, zero, pos) = ternary_counts(&set);
        let total = neg + zero + pos;
        assert!(total >= 100_000);
        let q = 1.0 / s as f64;
        assert!(within_3_sigma(zero, total, 1.0 - 2.0 * q), "s={s} zero {}", zero as f64 / total as f64);
        assert!(within_3_sigma(neg, total, q), "s={s}");
        assert!(within_3_sigma(pos, total, q), "s={s}");
    }
}

#[test]
fn ternary_entries_take_one_magnitude_per_matrix() {
    let set = BasisSet::generate(BasisConfig::new(5, Distribution::Ternary { s: 4 }, 3, 2, 20, 10)).unwrap();
    for m in set.b_stack().iter().chain(set.a_stack()) {
        let nz: Vec<f64> = m.iter().filter(|v| **v != 0.0).map(|v| v.abs()).collect();
        assert!(nz.windows(2).all(|w| w[0] == w[1]));
    }
}

#[test]
fn generation_is_thread_independent() {
    let cfg = BasisConfig::new(11, Distribution::Uniform, 6, 3, 40, 30);
    let serial = BasisSet::generate(cfg.clone()).unwrap();
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let c = cfg.clone();
            std::thread::spawn(move || BasisSet::generate(c).unwrap())
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), serial);
    }
}

#[test]
fn collinearity_closed_form_matches_monte_carlo() {
    for (s, d, seed) in [(2u64, 4usize, 1u64), (3, 6, 2)] {
        let exact = collinearity_probability(s as f64, d, 1, 1).unwrap().p;
        let (est, se) = collinearity_monte_carlo(s, d, 1_000_000, seed).unwrap();
        assert!((est - exact).abs() <= 3.0 * se, "s={s} d={d}: {est} vs {exact} (se {se})");
    }
}

#[test]
fn collinearity_at_transformer_scale() {
    let c = collinearity_probability(768f64.sqrt(), 768, 128, 768).unwrap();
    assert!((c.p.log10() - (2e-49f64).log10()).abs() < 1.0, "{}", c.p);
    assert!((c.p2.log10() - (8e-44f64).log10()).abs() < 1.0, "{}", c.p2);
}

fn dist() -> impl Strategy<Value = Distribution> {
    prop_oneof![
        Just(Distribution::Uniform),
        Just(Distribution::Normal),
        (2u64..6).prop_map(|s| Distribution::Ternary { s }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn slices_equal_leading_blocks(seed in any::<u64>(), dist in dist(), n in 1usize..4, r in 1usize..4,
                                   big_d in 6usize..12, d in 6usize..12, fd in 0.1f64..1.0, fdd in 0.1f64..1.0) {
        let set = BasisSet::generate(BasisConfig::new(seed, dist, n, r, big_d, d)).unwrap();
        let ld = ((big_d as f64 * fd).ceil() as usize).max(1);
        let ldd = ((d as f64 * fdd).ceil() as usize).max(1);
        let slice = set.slice_for_layer("l", ld, ldd).unwrap();
        for j in 0..n {
            prop_assert_eq!(slice.b(&set, j).into_owned(), set.b(j).rows(0, ld).into_owned());
        }
        prop_assert_eq!(slice.a(&set).into_owned(), set.a_shared().columns(0, ldd).into_owned());
        let again = set.slice_for_layer("other", ld, ldd).unwrap();
        prop_assert_eq!(again.b(&set, 0).into_owned(), slice.b(&set, 0).into_owned());
    }

    #[test]
    fn regeneration_is_bit_identical(seed in any::<u64>(), dist in dist()) {
        let cfg = BasisConfig::new(seed, dist, 3, 2, 10, 7);
        let a = BasisSet::generate(cfg.clone()).unwrap();
        let b = BasisSet::generate(cfg).unwrap();
        prop_assert!(a.b_stack().iter().zip(b.b_stack()).all(|(x, y)| x.iter().zip(y.iter()).all(|(p, q)| p.to_bits() == q.to_bits())));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn entries_finite_and_normalized(seed in any::<u64>(), dist in dist()) {
        let set = BasisSet::generate(BasisConfig::new(seed, dist, 4, 3, 64, 48)).unwrap();
        let mut sq = 0.0;
        let mut cols = 0usize;
        for b in set.b_stack() {
            prop_assert!(b.iter().all(|v| v.is_finite()));
            sq += b.norm_squared();
            cols += b.ncols();
        }
        // Expected squared column norm is 1; averaged over 12 columns of 64 entries.
        let mean = sq / cols as f64;
        prop_assert!((mean - 1.0).abs() < 0.5, "{}", mean);
    }
}
