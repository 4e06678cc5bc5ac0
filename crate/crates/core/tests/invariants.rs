use carshare_core::dataset::synth::{synth_generate, Preset};
use carshare_core::diagnostics::{fold_assignment, morans_i, Alternative};
use carshare_core::forest::{rf_fit, tree_shap, ForestParams};
use carshare_core::linear::gwr_fit;
use carshare_core::spatial::{knn_weights, Bandwidth, Kernel, SpatialIndex};
use proptest::prelude::*;

fn kernel() -> impl Strategy<Value = Kernel> {
    prop::sample::select(Kernel::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn moran_is_affine_invariant(
        seed in 0u64..1000,
        scale in 0.01f64..100.0,
        shift in -50.0f64..50.0,
    ) {
        let (t, _) = synth_generate(&Preset::TwoCluster.spec(80), seed).unwrap();
        let w = knn_weights(&SpatialIndex::new(&t.locations).unwrap(), 6, true).unwrap();
        let r: Vec<f64> = t.y.iter().copied().collect();
        let moved: Vec<f64> = r.iter().map(|v| scale * v + shift).collect();
        let a = morans_i(&r, &w, 99, seed, Alternative::Greater).unwrap();
        let b = morans_i(&moved, &w, 99, seed, Alternative::Greater).unwrap();
        prop_assert!((a.i - b.i).abs() < 1e-9);
        prop_assert_eq!(a.p_value, b.p_value);
    }

    #[test]
    fn folds_partition_evenly(n in 10usize..300, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = fold_assignment(n, k, seed).unwrap();
        prop_assert_eq!(folds.len(), n);
        let mut sizes = vec![0usize; k];
        for f in folds {
            sizes[f] += 1;
        }
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
    }

    #[test]
    fn gwr_hat_diagonal_is_a_leverage(seed in 0u64..500, kernel in kernel(), k in 25usize..60) {
        let (t, _) = synth_generate(&Preset::Multiscale.spec(70), seed).unwrap();
        let fit = gwr_fit(&t, kernel, Bandwidth::Adaptive(k)).unwrap();
        for (i, h) in fit.hat_diag.iter().enumerate() {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(h), "h[{i}] = {h}");
        }
        let tr: f64 = fit.hat_diag.iter().sum();
        prop_assert!((fit.tr_s - tr).abs() < 1e-9);
        for i in 0..t.n() {
            prop_assert!((fit.fitted[i] + fit.residuals[i] - t.y[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn shap_local_accuracy(seed in 0u64..200, x0 in -5.0f64..25.0, x1 in -5.0f64..15.0) {
        let (t, _) = synth_generate(&Preset::SaturatingSupply.spec(60), seed).unwrap();
        let params = ForestParams { n_trees: 10, ..ForestParams::default() };
        let model = rf_fit(&t, &params, seed).unwrap();
        let x = [x0, x1];
        let s = tree_shap(&model, &x).unwrap();
        let total = s.base_value + s.phi.iter().sum::<f64>();
        prop_assert!((total - model.predict_row(&x)).abs() < 1e-9);
    }

    #[test]
    fn standardize_round_trips(seed in 0u64..500) {
        let (t, _) = synth_generate(&Preset::SaturatingSupply.spec(40), seed).unwrap();
        let back = t.standardize().unwrap().destandardize();
        for (a, b) in t.x.iter().zip(back.x.iter()).chain(t.y.iter().zip(back.y.iter())) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }
}
