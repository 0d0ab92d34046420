use proptest::prelude::*;
use randlora::io::{load_basis_set, load_matrix, read_csv_matrix, save_basis_set, save_matrix, write_csv_matrix};
use randlora::rng::Stream;
use randlora::{BasisConfig, BasisSet, Distribution, Matrix};
use serde_json::json;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matrix_container_round_trip_is_bitwise(seed in any::<u64>(), rows in 1usize..12, cols in 1usize..12) {
        let mut s = Stream::new(seed);
        let m = Matrix::from_fn(rows, cols, |_, _| s.next_normal() * 1e3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_matrix(&path, &m, json!({"seed": seed})).unwrap();
        let back = load_matrix(&path).unwrap();
        prop_assert!(m.iter().zip(back.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(back.shape(), m.shape());
    }

    #[test]
    fn csv_round_trip(seed in any::<u64>(), rows in 1usize..8, cols in 1usize..8) {
        let mut s = Stream::new(seed);
        let m = Matrix::from_fn(rows, cols, |_, _| s.next_normal());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_csv_matrix(&path, &m).unwrap();
        prop_assert_eq!(read_csv_matrix(&path).unwrap(), m);
    }
}

#[test]
fn basis_set_round_trip() {
    let set = BasisSet::generate(BasisConfig::new(4, Distribution::Ternary { s: 3 }, 3, 2, 9, 5).per_term_a()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bases.json");
    save_basis_set(&path, &set, json!(null)).unwrap();
    assert_eq!(load_basis_set(&path).unwrap(), set);
}
