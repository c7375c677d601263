use fpt_core::analysis::{
    attention_objective, attention_objective_squared_trace, attention_objective_trace, jacobian_bound_check,
    maxent_closed_form, maxent_dual_solve, optimal_pca_attention, token_similarity,
};
use fpt_core::backbone::{decode_container, decode_tensors, encode_container, init_random, BackboneConfig, ForwardTrace, IoConfig, ModelConfig, Pooling};
use fpt_core::metrics;
use fpt_core::numerics::{spectral_norm, Matrix, RandomStream};
use fpt_core::preprocess::{patchify, revin_denormalize, revin_normalize, PatchConfig};
use proptest::prelude::*;

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = RandomStream::new(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.gaussian())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimal_attention_beats_random_rank_m(d in 2usize..6, extra in 2usize..10, seed in any::<u64>(), m_pick in 0usize..8) {
        let n = d + extra;
        let m = 1 + m_pick % d;
        let x = gaussian(n, d, seed);
        let sol = optimal_pca_attention(&x, m).unwrap();
        let scale = x.center_columns().gram().trace();
        prop_assert!((sol.objective - sol.tail_energy()).abs() <= 1e-9 * scale);
        for k in 0..5u64 {
            let u = gaussian(d, m, seed ^ (k + 1)).scale(0.3 / scale.sqrt());
            let v = gaussian(d, m, seed.rotate_left(7) ^ k);
            let a = u.dot(&v.transpose());
            prop_assert!(sol.objective <= attention_objective(&x, &a).unwrap() + 1e-9 * scale);
        }
    }

    #[test]
    fn objective_forms_agree(n in 2usize..12, d in 1usize..6, seed in any::<u64>()) {
        let x = gaussian(n, d, seed);
        let a = gaussian(d, d, seed.wrapping_add(1)).scale(0.1);
        let sum = attention_objective(&x, &a).unwrap();
        let tr = attention_objective_trace(&x, &a).unwrap();
        prop_assert!((sum - tr).abs() <= 1e-9 * sum.abs().max(1.0));
        let sym = a.add(&a.transpose()).scale(0.5);
        let s1 = attention_objective(&x, &sym).unwrap();
        let s2 = attention_objective_squared_trace(&x, &sym).unwrap();
        prop_assert!((s1 - s2).abs() <= 1e-9 * s1.abs().max(1.0));
    }

    #[test]
    fn jacobian_bound_holds(n in 1usize..6, d in 1usize..4, seed in any::<u64>(), norm in 0.05f64..1.0) {
        let x = gaussian(n, d, seed);
        let raw = gaussian(d, d, seed ^ 0x9e37);
        let a = raw.scale(norm / spectral_norm(&raw).unwrap().max(1e-12));
        let b = jacobian_bound_check(&x, &a).unwrap();
        prop_assert!(b.holds, "lhs {} rhs {}", b.lhs, b.rhs);
        prop_assert!(b.rhs_without_n <= b.rhs);
    }

    #[test]
    fn maxent_matches_closed_form(q in 0.01f64..0.99, g in 0.01f64..0.99) {
        let l = maxent_dual_solve(q, g).unwrap();
        prop_assert!((l - maxent_closed_form(q, g)).abs() <= 1e-9);
    }

    #[test]
    fn similarity_is_bounded_and_counts_pairs(layers in 1usize..4, n in 2usize..10, d in 1usize..6, seed in any::<u64>()) {
        let trace = ForwardTrace { layers: (0..layers).map(|l| gaussian(n, d, seed.wrapping_add(l as u64))).collect() };
        let p = token_similarity(&trace).unwrap();
        prop_assert_eq!(p.layer_means.len(), layers);
        for (m, h) in p.layer_means.iter().zip(&p.histograms) {
            prop_assert!((-1.0..=1.0).contains(m));
            prop_assert_eq!(h.iter().sum::<u64>(), (n * (n - 1) / 2) as u64);
        }
    }

    #[test]
    fn revin_round_trips(xs in prop::collection::vec(-1e3f64..1e3, 1..200), eps in 0.0f64..1e-3) {
        let (z, stats) = revin_normalize(&xs, eps).unwrap();
        let back = revin_denormalize(&z, &stats);
        let mag = xs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in xs.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-10 * mag);
        }
    }

    #[test]
    fn patch_count_matches_enumeration(l in 1usize..300, p in 1usize..40, s in 1usize..40) {
        let cfg = PatchConfig::new(p, s).unwrap();
        let count = (0..l).step_by(s).filter(|st| st + p <= l).count();
        prop_assert_eq!(cfg.n_patches(l).unwrap_or(0), count);
        if count > 0 {
            let x: Vec<f64> = (0..l).map(|i| i as f64).collect();
            let t = patchify(&x, &cfg).unwrap();
            prop_assert_eq!(t.shape(), (count, p));
            prop_assert_eq!(t.get(count - 1, p - 1), ((count - 1) * s + p - 1) as f64);
        }
    }

    #[test]
    fn metrics_are_nonnegative_and_smape_symmetric(
        pairs in prop::collection::vec((-50f64..50.0, -50f64..50.0), 1..64)
    ) {
        let (y, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let s = metrics::smape(&y, &p).unwrap();
        prop_assert!((0.0..=200.0).contains(&s));
        prop_assert!((s - metrics::smape(&p, &y).unwrap()).abs() <= 1e-12);
        prop_assert!(metrics::mse(&y, &p).unwrap() >= 0.0);
        let mae = metrics::mae(&y, &p).unwrap();
        prop_assert!(mae * mae <= metrics::mse(&y, &p).unwrap() + 1e-9);
    }

    #[test]
    fn container_round_trips(n_layers in 0usize..3, seed in any::<u64>()) {
        let cfg = ModelConfig::new(
            BackboneConfig { n_layers, d_model: 4, n_heads: 2, d_ff: 8, max_tokens: 4, ..Default::default() },
            IoConfig { input_dim: 3, pooling: Pooling::Flatten { n_tokens: 2 }, out_dim: 2 },
        ).unwrap();
        let store = init_random(&cfg, &mut RandomStream::new(seed)).unwrap();
        let (manifest, blob) = encode_container(&store);
        let tensors = decode_tensors(&manifest, &blob).unwrap();
        prop_assert_eq!(tensors.len(), store.names().len());
        // The container stores f32, so a round trip equals the quantized store.
        let mut quantized = store.clone();
        quantized.quantize();
        prop_assert_eq!(decode_container(&manifest, &blob, &cfg).unwrap(), quantized);
    }
}
