//! Property tests for invariants that hold for every input.

mod common;

use i2gfp::data::{augment, flip_sample, AugmentationConfig};
use i2gfp::losses::pyramid::{build_pyramid, collapse, Plane};
use i2gfp::losses::{l1_loss, sample_loss};
use i2gfp::metrics::{conn_metric, grad_metric, mse, sad};
use i2gfp::raster::{
    blend, composite, generate_trimap, unknown_mask, AlphaMatte, Mask, MattingSample, RgbImage,
};
use i2gfp::trainer::{cosine_lr, TrainConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matte(h: usize, w: usize) -> impl Strategy<Value = AlphaMatte> {
    prop::collection::vec(
        prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0],
        h * w,
    )
    .prop_map(move |d| AlphaMatte::new(h, w, d).unwrap())
}

fn mask(h: usize, w: usize) -> impl Strategy<Value = Mask> {
    prop::collection::vec(any::<bool>(), h * w).prop_map(move |d| Mask::new(h, w, d).unwrap())
}

fn pair_and_mask() -> impl Strategy<Value = (AlphaMatte, AlphaMatte, Mask)> {
    (4usize..14, 4usize..14).prop_flat_map(|(h, w)| (matte(h, w), matte(h, w), mask(h, w)))
}

fn rgb(h: usize, w: usize) -> impl Strategy<Value = RgbImage> {
    prop::collection::vec(0.0f64..=1.0, 3 * h * w).prop_map(move |d| RgbImage::new(h, w, d).unwrap())
}

fn sample() -> impl Strategy<Value = MattingSample> {
    (8usize..24, 8usize..24, 0usize..3)
        .prop_flat_map(|(h, w, r)| (matte(h, w), rgb(h, w), rgb(h, w), Just(r)))
        .prop_map(|(a, f, b, r)| {
            let img = composite(&f, &b, &a).unwrap();
            let tri = generate_trimap(&a, r);
            MattingSample::new(img, tri, Some(a), Some(f), Some(b)).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_are_symmetric_and_vanish_on_identity((p, g, m) in pair_and_mask()) {
        prop_assert_eq!(sad(&p, &g, &m).unwrap(), sad(&g, &p, &m).unwrap());
        prop_assert_eq!(mse(&p, &g, &m).unwrap(), mse(&g, &p, &m).unwrap());
        prop_assert_eq!(grad_metric(&p, &g, &m).unwrap(), grad_metric(&g, &p, &m).unwrap());
        prop_assert_eq!(conn_metric(&p, &g, &m).unwrap(), conn_metric(&g, &p, &m).unwrap());
        for v in [sad(&p, &p, &m), mse(&p, &p, &m), grad_metric(&p, &p, &m), conn_metric(&p, &p, &m)] {
            prop_assert_eq!(v.unwrap(), 0.0);
        }
        for v in [sad(&p, &g, &m), mse(&p, &g, &m), grad_metric(&p, &g, &m), conn_metric(&p, &g, &m)] {
            prop_assert!(v.unwrap() >= 0.0);
        }
    }

    #[test]
    fn pointwise_metrics_ignore_pixels_outside_the_mask(
        (p, g, m) in pair_and_mask(),
        fill in 0.0f64..=1.0,
    ) {
        let (h, w) = p.dims();
        let outside = |a: &AlphaMatte| AlphaMatte::from_fn(h, w, |y, x| if m.get(y, x) { a.get(y, x) } else { fill });
        let (p2, g2) = (outside(&p), outside(&g));
        prop_assert_eq!(sad(&p, &g, &m).unwrap(), sad(&p2, &g, &m).unwrap());
        prop_assert_eq!(mse(&p, &g, &m).unwrap(), mse(&p, &g2, &m).unwrap());
        prop_assert_eq!(l1_loss(&p, &g, &m).unwrap(), l1_loss(&p2, &g2, &m).unwrap());
    }

    #[test]
    fn metrics_match_scalar_oracles((p, g, m) in pair_and_mask()) {
        prop_assert!((sad(&p, &g, &m).unwrap() - common::sad_oracle(&p, &g, &m)).abs() < 1e-7);
        prop_assert!((mse(&p, &g, &m).unwrap() - common::mse_oracle(&p, &g, &m)).abs() < 1e-7);
        prop_assert_eq!(conn_metric(&p, &g, &m).unwrap(), common::conn_oracle(&p, &g, &m));
    }

    #[test]
    fn cosine_schedule_is_non_increasing(
        iterations in 1usize..5000,
        lr in 1e-6f64..1e-2,
        floor in 0.0f64..1.0,
    ) {
        let cfg = TrainConfig { iterations, lr_initial: lr, lr_min: lr * floor, ..TrainConfig::default() };
        let mut prev = f64::INFINITY;
        let step = (iterations / 200).max(1);
        for it in (0..=iterations).step_by(step).chain([iterations]) {
            let v = cosine_lr(it, &cfg).unwrap();
            prop_assert!(v <= prev + 1e-18);
            prop_assert!(v >= cfg.lr_min - 1e-18 && v <= cfg.lr_initial + 1e-18);
            prev = v;
        }
        prop_assert_eq!(cosine_lr(0, &cfg).unwrap(), lr);
        prop_assert!((cosine_lr(iterations, &cfg).unwrap() - cfg.lr_min).abs() < 1e-15);
    }

    #[test]
    fn augmentation_keeps_members_aligned(s in sample(), seed in any::<u64>(), size in 32usize..48) {
        let cfg = AugmentationConfig::scaled(size);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = augment(&s, &cfg, &mut rng).unwrap();
        prop_assert_eq!(out.dims(), (size, size));
        prop_assert_eq!(out.trimap.dims(), (size, size));
        prop_assert_eq!(out.ground_truth.as_ref().unwrap().dims(), (size, size));
        prop_assert_eq!(out.foreground.as_ref().unwrap().dims(), (size, size));
        prop_assert_eq!(out.background.as_ref().unwrap().dims(), (size, size));
        prop_assert!(out.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn flip_commutes_with_the_unknown_mask(s in sample()) {
        let (h, w) = s.dims();
        let flipped = flip_sample(&s);
        let m = unknown_mask(&s.trimap);
        let mf = unknown_mask(&flipped.trimap);
        for y in 0..h {
            for x in 0..w {
                prop_assert_eq!(mf.get(y, x), m.get(y, w - 1 - x));
            }
        }
        prop_assert_eq!(flip_sample(&flipped), s);
    }

    #[test]
    fn pyramid_collapses_to_its_input(
        data in prop::collection::vec(-1.0f64..1.0, 32 * 32),
    ) {
        let x = Plane::new(32, 32, data);
        let back = collapse(&build_pyramid(&x));
        prop_assert!(common::max_abs_diff(&back.data, &x.data) <= 1e-9);
    }

    #[test]
    fn losses_vanish_at_ground_truth_and_are_nonnegative(s in sample(), noise in matte(1, 1)) {
        let gt = s.ground_truth.clone().unwrap();
        let (at_gt, grad) = sample_loss(gt.data(), &s).unwrap();
        prop_assert_eq!(at_gt.total, 0.0);
        prop_assert!(grad.iter().all(|&g| g == 0.0));
        let shifted: Vec<f64> = gt.data().iter().map(|a| (a + noise.get(0, 0)).min(1.0)).collect();
        let (b, _) = sample_loss(&shifted, &s).unwrap();
        prop_assert!(b.l1 >= 0.0 && b.comp >= 0.0 && b.grad >= 0.0 && b.lap >= 0.0);
    }

    #[test]
    fn blend_stays_in_range_and_hits_endpoints(a in 0.0f64..=1.0, f in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let c = blend(a, f, b);
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert_eq!(blend(1.0, f, b), f);
        prop_assert_eq!(blend(0.0, f, b), b);
        prop_assert_eq!(blend(a, f, f), f);
    }

    #[test]
    fn trimap_unknown_covers_fractional_alpha(a in (4usize..20, 4usize..20).prop_flat_map(|(h, w)| matte(h, w)), r in 0usize..4) {
        let t = generate_trimap(&a, r);
        let m = unknown_mask(&t);
        let (h, w) = a.dims();
        for y in 0..h {
            for x in 0..w {
                let v = a.get(y, x);
                if v > 0.0 && v < 1.0 {
                    prop_assert!(m.get(y, x));
                }
            }
        }
    }
}
