//! Property tests for the statistical core: invariances that should hold
//! for any input, not just hand-picked examples.

use proptest::prelude::*;

use gsnr_lab::gradstats::{gsnr, moments, pearson, same_sign_proportion, GSNR_EPS};
use gsnr_lab::netcore::{Activation, GradMatrix, LossKind, MlpParams, MlpSpec};
use gsnr_lab::osgr::{osgr_rhs19, osgr_rhs22, MomentEnsemble};
use gsnr_lab::seed::sub_seed;

prop_compose! {
    fn grad_rows()(
        rows in prop::collection::vec(
            prop::collection::vec(-10.0f64..10.0, 4),
            2..20,
        ),
    ) -> Vec<Vec<f64>> {
        rows
    }
}

proptest! {
    // GSNR is a ratio of second moments, so rescaling every per-sample
    // gradient by the same nonzero factor leaves it unchanged.
    #[test]
    fn gsnr_is_scale_invariant(rows in grad_rows(), k in prop_oneof![0.01f64..100.0, -100.0f64..-0.01]) {
        let g = GradMatrix::from_rows(&rows).unwrap();
        let scaled_rows: Vec<Vec<f64>> =
            rows.iter().map(|r| r.iter().map(|v| v * k).collect()).collect();
        let gs = GradMatrix::from_rows(&scaled_rows).unwrap();
        let a = gsnr(&moments(&g).unwrap(), GSNR_EPS).unwrap();
        let b = gsnr(&moments(&gs).unwrap(), GSNR_EPS).unwrap();
        for j in 0..a.r.len() {
            if a.floored[j] || b.floored[j] {
                continue;
            }
            let rel = (a.r[j] - b.r[j]).abs() / a.r[j].max(1e-300);
            prop_assert!(rel < 1e-6, "param {j}: {} vs {}", a.r[j], b.r[j]);
        }
    }

    // Duplicating the whole sample leaves population moments unchanged.
    #[test]
    fn moments_are_invariant_under_duplication(rows in grad_rows()) {
        let doubled: Vec<Vec<f64>> = rows.iter().chain(rows.iter()).cloned().collect();
        let a = moments(&GradMatrix::from_rows(&rows).unwrap()).unwrap();
        let b = moments(&GradMatrix::from_rows(&doubled).unwrap()).unwrap();
        for j in 0..a.mean.len() {
            prop_assert!((a.mean[j] - b.mean[j]).abs() < 1e-9);
            prop_assert!((a.var[j] - b.var[j]).abs() < 1e-9);
        }
    }

    // The two algebraic routes to the moment-based OSGR agree to roundoff.
    #[test]
    fn osgr_moment_forms_agree(
        e_g2 in prop::collection::vec(1e-8f64..10.0, 1..30),
        rho2_scale in prop::collection::vec(1e-8f64..10.0, 1..30),
        n in 1usize..10_000,
    ) {
        let p = e_g2.len().min(rho2_scale.len());
        let ensemble = MomentEnsemble {
            e_g2: e_g2[..p].to_vec(),
            rho2: rho2_scale[..p].to_vec(),
            m: 8,
            n,
        };
        let a = osgr_rhs19(&ensemble).unwrap();
        let b = osgr_rhs22(&ensemble).unwrap();
        prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        prop_assert!(a <= 1.0 + 1e-12);
    }

    // Majority sign proportion is bounded by construction.
    #[test]
    fn same_sign_proportion_lies_in_half_to_one(rows in grad_rows()) {
        let g = GradMatrix::from_rows(&rows).unwrap();
        let stats = same_sign_proportion(&g).unwrap();
        for &p in &stats.p_same_sign {
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }

    // Pearson correlation of a vector with a positive affine image of
    // itself is 1 (and -1 for a negative slope).
    #[test]
    fn pearson_of_affine_image_is_unit(
        x in prop::collection::vec(-100.0f64..100.0, 3..50),
        a in prop_oneof![0.1f64..10.0, -10.0f64..-0.1],
        b in -5.0f64..5.0,
    ) {
        let spread = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - x.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-6);
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let r = pearson(&x, &y).unwrap();
        prop_assert!((r.abs() - 1.0).abs() < 1e-6);
        prop_assert_eq!(r.signum(), a.signum());
    }

    // Parameter flattening round-trips for arbitrary valid shapes.
    #[test]
    fn flatten_unflatten_roundtrip(
        hidden in prop::collection::vec(1usize..8, 1..3),
        seed in any::<u64>(),
    ) {
        let mut dims = vec![3];
        dims.extend(&hidden);
        dims.push(2);
        let spec = MlpSpec::new(dims, Activation::Relu, LossKind::Mse).unwrap();
        let params = gsnr_lab::netcore::init_params(&spec, seed);
        let flat = params.flatten();
        prop_assert_eq!(flat.len(), spec.param_count());
        let back = MlpParams::unflatten(&spec, &flat).unwrap();
        prop_assert_eq!(back.flatten(), flat);
    }

    // Seed fan-out never collides across small index ranges.
    #[test]
    fn sub_seed_has_no_small_range_collisions(master in any::<u64>()) {
        let mut seen = std::collections::HashSet::new();
        for i in 0..512u64 {
            prop_assert!(seen.insert(sub_seed(master, i)));
        }
    }
}
