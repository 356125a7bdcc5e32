mod support;

use cardiofat::evaluation::{confusion_and_rates, dice};
use cardiofat::features::{csv, geometric_moments, glcm_moments, run_length_stats, Quantizer, UNIT_OFFSETS};
use cardiofat::imaging::{FatWindow, Label, LabelMask, Raster};
use cardiofat::registration::{build_atlas, wmi, WmiParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::*;

const TOL: f64 = 1e-9;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wmi_matches_dense_histogram(seed in any::<u64>(), w in 2usize..12, h in 2usize..12, sources in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let atlas = random_atlas(&mut rng, w, h, sources);
        let fixed = Raster::from_fn(w, h, |_, _| rand::Rng::random_range(&mut rng, -500.0..500.0));
        for (bins, base) in [(32, 2.0), (8, std::f64::consts::E), (5, 10.0)] {
            let got = wmi(&fixed, &atlas, &WmiParams::new(bins, base).unwrap()).unwrap();
            let want = wmi_oracle(fixed.data(), atlas.weights().data(), bins, base);
            prop_assert!((got - want).abs() < TOL, "{got} vs {want}");
        }
    }

    #[test]
    fn wmi_is_zero_for_constant_fixed_image(seed in any::<u64>(), c in -1000.0f64..1000.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let atlas = random_atlas(&mut rng, 8, 8, 5);
        let fixed = Raster::filled(8, 8, c);
        prop_assert!(wmi(&fixed, &atlas, &WmiParams::default()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn atlas_is_invariant_under_patch_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let patches: Vec<_> = (0..6)
            .map(|_| Raster::from_fn(9, 7, |_, _| u8::from(rand::Rng::random_bool(&mut rng, 0.4))))
            .collect();
        let mut reversed = patches.clone();
        reversed.reverse();
        prop_assert_eq!(build_atlas(&patches).unwrap(), build_atlas(&reversed).unwrap());
    }

    #[test]
    fn texture_features_match_naive_loops(seed in any::<u64>(), half in 1usize..8, bg in 0.0f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let size = 2 * half + 1;
        let win = random_fat_window(&mut rng, size, bg);
        let fw = FatWindow::default();
        let q = Quantizer::new(fw, 16).unwrap();

        match (glcm_moments(&win, &q, &UNIT_OFFSETS), glcm_oracle(&win, fw, 16, &UNIT_OFFSETS)) {
            (Ok(g), Some(o)) => {
                let got = [g.energy, g.contrast, g.correlation, g.homogeneity, g.entropy];
                let want = [o.energy, o.contrast, o.correlation, o.homogeneity, o.entropy];
                prop_assert!(max_abs_diff(&got, &want) < TOL, "{got:?} vs {want:?}");
            }
            (Err(_), None) => {}
            (g, o) => prop_assert!(false, "glcm {:?} vs oracle defined {}", g, o.is_some()),
        }
        match (run_length_stats(&win, &q), runs_oracle(&win, fw, 16)) {
            (Ok(r), Some((rp, gln))) => {
                prop_assert!((r.run_percentage - rp).abs() < TOL);
                prop_assert!((r.grey_level_nonuniformity - gln).abs() < TOL);
            }
            (Err(_), None) => {}
            (r, o) => prop_assert!(false, "runs {:?} vs {:?}", r, o),
        }
        match (geometric_moments(&win), moments_oracle(&win)) {
            (Ok(m), Some((a, b, c))) => prop_assert!(max_abs_diff(&[m.mu20, m.mu02, m.mu11], &[a, b, c]) < TOL),
            (Err(_), None) => {}
            (m, o) => prop_assert!(false, "moments {:?} vs {:?}", m, o),
        }
        let sigma = (size / 2) as f64 / 2.0;
        prop_assert!((csv(&win, sigma).unwrap() - csv_oracle(&win, sigma)).abs() < TOL);
    }

    #[test]
    fn one_vs_rest_rates_are_complementary(seed in any::<u64>(), n in 1usize..300, k in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<usize> = (0..n).map(|_| rand::Rng::random_range(&mut rng, 0..k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rand::Rng::random_range(&mut rng, 0..k)).collect();
        let classes: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
        let m = confusion_and_rates(&truth, &pred, &classes).unwrap();
        prop_assert_eq!(m.confusion.total(), n as u64);
        for r in &m.per_class {
            prop_assert_eq!(r.tp + r.fp + r.tn + r.fn_, n as u64);
            if let (Some(a), Some(b)) = (r.tp_rate, r.fn_rate) {
                prop_assert_eq!(a + b, 1.0);
            }
            if let (Some(a), Some(b)) = (r.tn_rate, r.fp_rate) {
                prop_assert_eq!(a + b, 1.0);
            }
        }
    }

    #[test]
    fn dice_is_symmetric_and_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || LabelMask::from_fn(12, 9, |_, _| Label::ALL[rand::Rng::random_range(&mut rng, 0..4)]);
        let (a, b) = (draw(), draw());
        for l in Label::FAT_CLASSES {
            let d = dice(&a, &b, l).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, dice(&b, &a, l).unwrap());
            prop_assert_eq!(dice(&a, &a, l).unwrap(), 1.0);
        }
    }
}
