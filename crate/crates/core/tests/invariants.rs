//! Property tests of the public API.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_doa::array_model::{steering_vector, ArrayGeometry};
use sparse_doa::data_gen::{
    count_label_combinations, generate_blocks, generate_dataset, label, read_dataset, unrank_combination,
    write_dataset, AngleGrid, Combinations, DatasetHeader, DatasetSpec,
};
use sparse_doa::eval_metrics::{metrics, tally, threshold_detect};
use sparse_doa::nn_core::{load_checkpoint, save_checkpoint, Parameterized};
use sparse_doa::omp_baseline::omp_solve;
use sparse_doa::snn_model::{frequency_embedding, sa_layer, EncoderConfig, SnnModel};
use sparse_doa::C64;

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<C64>> {
    proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| C64::new(re, im)), n)
}

fn bool_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<bool>>> {
    proptest::collection::vec(proptest::collection::vec(any::<bool>(), cols), rows)
}

fn small_spec(seed: u64) -> DatasetSpec {
    DatasetSpec {
        grid: AngleGrid::new(-12.0, 12.0, 2.0).unwrap(),
        n_elements: 6,
        k_max: 2,
        signals_per_combination: 3,
        combinations: Some(11),
        seed,
        ..DatasetSpec::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steering_entries_have_unit_modulus(n in 1usize..24, theta in -90.0f64..90.0) {
        let g = ArrayGeometry::half_wavelength_ula(n).unwrap();
        let a = steering_vector(&g, theta).unwrap();
        prop_assert_eq!(a.len(), n);
        for v in a {
            prop_assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unranking_walks_the_enumeration(m in 1usize..9, k_max in 1usize..4) {
        prop_assume!(k_max <= m);
        let all: Vec<Vec<usize>> = Combinations::new(m, k_max).collect();
        prop_assert_eq!(all.len() as u128, count_label_combinations(m, k_max).unwrap());
        for (r, c) in all.iter().enumerate() {
            prop_assert_eq!(&unrank_combination(m, k_max, r as u128).unwrap(), c);
            prop_assert!(c.windows(2).all(|w| w[0] < w[1]));
        }
        prop_assert!(unrank_combination(m, k_max, all.len() as u128).is_err());
    }

    #[test]
    fn labels_mark_exactly_the_sources(idx in proptest::collection::btree_set(0usize..121, 1..4)) {
        let grid = AngleGrid::default();
        let doas: Vec<f64> = idx.iter().map(|&i| grid.angle(i)).collect();
        let gt = label(&doas, &grid).unwrap();
        let on: Vec<usize> = (0..gt.len()).filter(|&i| gt[i]).collect();
        prop_assert_eq!(on, idx.into_iter().collect::<Vec<_>>());
    }

    #[test]
    fn sparse_augmentation_respects_its_budget(y in complex_vec(20), s in 0.0f64..0.95, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (out, n_active, mask) = sa_layer(&y, s, &mut rng).unwrap();
        let zeroed = mask.iter().filter(|m| !**m).count();
        prop_assert_eq!(n_active + zeroed, 20);
        prop_assert!(n_active >= 1);
        prop_assert!(zeroed as f64 <= s * 20.0 + 1e-9);
        for i in 0..20 {
            let want = if mask[i] { y[i] } else { C64::new(0.0, 0.0) };
            prop_assert_eq!(out[i], want);
        }
    }

    #[test]
    fn embedding_is_linear(
        y1 in complex_vec(20),
        y2 in complex_vec(20),
        k in 1usize..=20,
    ) {
        let dict = EncoderConfig::default().dictionary().unwrap();
        let sum: Vec<C64> = y1.iter().zip(&y2).map(|(a, b)| a + b).collect();
        let g = frequency_embedding(&sum, &dict, k).unwrap();
        let g1 = frequency_embedding(&y1, &dict, k).unwrap();
        let g2 = frequency_embedding(&y2, &dict, k).unwrap();
        for m in 0..g.len() {
            prop_assert!((g[m] - g1[m] - g2[m]).norm() < 1e-12);
        }
        prop_assert!(frequency_embedding(&y1, &dict, 0).is_err());
    }

    #[test]
    fn thresholding_matches_scalar_comparison(p in proptest::collection::vec(0.0f64..1.0, 0..50), tau in 0.0f64..1.0) {
        let d = threshold_detect(&p, tau);
        prop_assert_eq!(d.len(), p.len());
        for (b, v) in d.iter().zip(&p) {
            prop_assert_eq!(*b, *v > tau);
        }
    }

    #[test]
    fn metrics_stay_in_range(preds in bool_matrix(7, 5), gts in bool_matrix(7, 5)) {
        let m = metrics(&tally(&preds, &gts).unwrap());
        for v in [m.accuracy, m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if m.precision + m.recall > 0.0 {
            let h = 2.0 * m.precision * m.recall / (m.precision + m.recall);
            prop_assert!((m.f1 - h).abs() < 1e-12);
        }
        let perfect = metrics(&tally(&gts, &gts).unwrap());
        prop_assert_eq!(perfect.accuracy, 1.0);
    }

    #[test]
    fn omp_residuals_never_grow(y in complex_vec(20), mask_seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
        let mut mask = vec![true; 20];
        for _ in 0..6 {
            mask[rng.random_range(0..20)] = false;
        }
        let y: Vec<C64> = y.iter().zip(&mask).map(|(v, &m)| if m { *v } else { C64::new(0.0, 0.0) }).collect();
        let g = ArrayGeometry::half_wavelength_ula(20).unwrap().with_mask(mask).unwrap();
        let r = omp_solve(&y, &g, &AngleGrid::default(), 3, None).unwrap();
        prop_assert_eq!(r.indices.len(), r.coeffs.len());
        prop_assert_eq!(r.residual_norms.len(), r.indices.len() + 1);
        prop_assert!(r.residual_norms.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn generation_is_independent_of_block_size(seed in any::<u64>(), block in 1usize..12) {
        let spec = small_spec(seed);
        let whole = generate_dataset(&spec).unwrap();
        let mut blocks = Vec::new();
        for b in generate_blocks(&spec, block).unwrap() {
            blocks.extend(b.unwrap());
        }
        prop_assert_eq!(whole.len(), 33);
        prop_assert_eq!(&whole, &blocks);
        prop_assert_eq!(&whole, &generate_dataset(&spec).unwrap());
    }

    #[test]
    fn dataset_files_round_trip_exactly(seed in any::<u64>()) {
        let spec = small_spec(seed);
        let data = generate_dataset(&spec).unwrap();
        let header = DatasetHeader {
            grid: spec.grid,
            n_elements: spec.n_elements,
            element_spacing: spec.element_spacing,
            k_max: spec.k_max,
            count: 0,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.sdoa");
        prop_assert_eq!(write_dataset(&path, &header, data.clone()).unwrap(), data.len() as u64);
        let (h, back) = read_dataset(&path).unwrap();
        prop_assert_eq!(h.count, data.len() as u64);
        prop_assert_eq!(back, data);
    }
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let cfg = EncoderConfig::tiny(6, AngleGrid::new(-10.0, 10.0, 1.0).unwrap());
    let model = SnnModel::<f32>::new(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.sdow");
    save_checkpoint(&path, &model.params()).unwrap();
    let mut other = SnnModel::<f32>::new(cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    assert_ne!(other.flat_values(), model.flat_values());
    other.load_tensors(&load_checkpoint(&path).unwrap()).unwrap();
    assert_eq!(other.flat_values(), model.flat_values());
}
