use proptest::prelude::*;
use randlora::rng::Stream;
use randlora::trainkit::landscape::{linspace, ANCHOR_COORDS};
use randlora::trainkit::{barycentric, cka_linear, landscape_grid, make_teacher_student, train};
use randlora::{AdapterSpec, Matrix, OptimizerConfig};

fn random(rows: usize, cols: usize, s: &mut Stream) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| s.next_normal())
}

#[test]
fn independent_features_have_low_cka() {
    let mut s = Stream::new(9);
    let a = random(200, 8, &mut s);
    let b = random(200, 8, &mut s);
    assert!(cka_linear(&a, &b).unwrap() < 0.2);
}

#[test]
fn quadratic_landscape_matches_closed_form() {
    // f(θ) = Σ c_k (θ_k - m_k)², evaluated on θ(x, y) = Σ α_i θ_i.
    let c = [1.0, 2.5, 0.3];
    let m = [0.1, -0.4, 2.0];
    let f = |p: &[f64]| p.iter().zip(c.iter().zip(m)).map(|(v, (ck, mk))| ck * (v - mk).powi(2)).sum::<f64>();
    let a = [0.0, 1.0, 2.0];
    let b = [1.0, -1.0, 0.5];
    let cc = [-2.0, 0.0, 3.0];
    let g = landscape_grid(&a, &b, &cc, f, 41, 0.2).unwrap();
    for (iy, y) in g.ys.iter().enumerate() {
        for (ix, x) in g.xs.iter().enumerate() {
            // Closed-form weights for the default anchors.
            let (wa, wb, wc) = (1.0 - x - 0.5 * y, x - 0.5 * y, *y);
            let expect: f64 = (0..3)
                .map(|k| {
                    let t = wa * a[k] + wb * b[k] + wc * cc[k];
                    c[k] * (t - m[k]).powi(2)
                })
                .sum();
            assert!((g.grid[iy][ix] - expect).abs() <= 1e-8 * expect.abs().max(1.0));
        }
    }
    // Centroid is the uniform average model.
    let w = barycentric(&ANCHOR_COORDS, (0.5, 1.0 / 3.0)).unwrap();
    assert!(w.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
}

#[test]
fn full_rank_adapter_beats_matched_lora_on_flat_task() {
    // 16x16 layer: LoRA r=1 has 32 params, RandLoRA r=2 with two terms has 36.
    let task = make_teacher_student(3, 16, 16, &[1.0; 16], 128, 0.0).unwrap();
    let opt = OptimizerConfig::default().with_max_iters(1500);
    let set = randlora::BasisSet::generate(randlora::BasisConfig::new(3, randlora::Distribution::Normal, 8, 2, 16, 16)).unwrap();
    let lora = train(&task.w0, &AdapterSpec::lora(1), None, &task.data, None, &opt, 0).unwrap();
    let rl = train(&task.w0, &AdapterSpec::randlora_n(2, 2), Some(&set), &task.data, None, &opt, 0).unwrap();
    assert_eq!(lora.param_count, 32);
    assert_eq!(rl.param_count, 36);
    assert!(rl.final_loss() < lora.final_loss(), "{} vs {}", rl.final_loss(), lora.final_loss());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cka_is_bounded(seed in any::<u64>(), m in 3usize..30, p in 1usize..6, q in 1usize..6) {
        let mut s = Stream::new(seed);
        let a = random(m, p, &mut s);
        let b = random(m, q, &mut s);
        let v = cka_linear(&a, &b).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
    }

    #[test]
    fn cka_invariances(seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut s = Stream::new(seed);
        let a = random(25, 4, &mut s);
        let b = random(25, 3, &mut s);
        let q = random(4, 4, &mut s).qr().q();
        let base = cka_linear(&a, &b).unwrap();
        prop_assert!((cka_linear(&(&a * &q), &b).unwrap() - base).abs() < 1e-10);
        prop_assert!((cka_linear(&(&a * c), &b).unwrap() - base).abs() < 1e-10);
        prop_assert!((cka_linear(&a, &(&a * &q * c)).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn barycentric_weights_sum_to_one(x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let w = barycentric(&ANCHOR_COORDS, (x, y)).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let px = w[0] * 0.0 + w[1] * 1.0 + w[2] * 0.5;
        let py = w[2];
        prop_assert!((px - x).abs() < 1e-12 && (py - y).abs() < 1e-12);
    }

    #[test]
    fn linspace_endpoints_exact(lo in -5.0f64..0.0, hi in 0.1f64..5.0, n in 2usize..60) {
        let v = linspace(lo, hi, n);
        prop_assert_eq!(v.len(), n);
        prop_assert_eq!(v[0], lo);
        prop_assert_eq!(v[n - 1], hi);
    }

    #[test]
    fn adapter_init_preserves_frozen_loss(seed in 0u64..1000) {
        let task = make_teacher_student(seed, 6, 5, &[1.0; 5], 20, 0.1).unwrap();
        let opt = OptimizerConfig::default().with_max_iters(0).with_seed(seed);
        for spec in [AdapterSpec::lora(2), AdapterSpec::randlora(2)] {
            let set = randlora::BasisSet::generate(randlora::BasisConfig::new(seed, randlora::Distribution::Normal, 3, 2, 6, 5)).unwrap();
            let run = train(&task.w0, &spec, Some(&set), &task.data, None, &opt, 1).unwrap();
            prop_assert_eq!(run.initial_loss(), randlora::trainkit::mse(&task.data, &task.w0));
        }
    }
}
