use relight_core::image::*;
use relight_core::ImageF;
use proptest::prelude::*;

fn gray(w: usize, h: usize, data: &[f32]) -> ImageF {
    ImageF::new(w, h, 1, data.to_vec()).unwrap()
}

#[test]
fn rejects_bad_shapes() {
    assert!(ImageF::new(0, 1, 1, vec![]).is_err());
    assert!(ImageF::new(2, 2, 1, vec![0.0; 3]).is_err());
    assert!(ImageF::new(1, 1, 1, vec![f32::NAN]).is_err());
    assert!(ImageF::filled(1, 1, 1, f32::INFINITY).is_err());
}

#[test]
fn downsample_block_mean() {
    let img = gray(2, 2, &[0.0, 0.0, 1.0, 1.0]);
    let out = downsample_box(&img, 2).unwrap();
    assert_eq!((out.width(), out.height()), (1, 1));
    assert_eq!(out.data(), &[0.5]);
}

#[test]
fn downsample_identity_and_ramp() {
    let ramp = ImageF::from_fn(4, 4, 1, |x, y, _| (y * 4 + x) as f32 / 16.0).unwrap();
    assert_eq!(downsample_box(&ramp, 1).unwrap(), ramp);
    // block (0,0) = {0,1,4,5}/16, (1,0) = {2,3,6,7}/16, ...
    let out = downsample_box(&ramp, 2).unwrap();
    assert_eq!(out.data(), &[2.5 / 16.0, 4.5 / 16.0, 10.5 / 16.0, 12.5 / 16.0]);
}

#[test]
fn downsample_pads_by_replication() {
    let img = gray(3, 1, &[0.0, 0.2, 1.0]);
    let out = downsample_box(&img, 2).unwrap();
    assert_eq!((out.width(), out.height()), (2, 1));
    assert!((out.data()[0] - 0.1).abs() < 1e-7);
    assert_eq!(out.data()[1], 1.0);
}

#[test]
fn bad_factors() {
    let img = gray(2, 2, &[0.0; 4]);
    assert!(downsample_box(&img, 0).is_err());
    assert!(downsample_box(&img, 3).is_err());
    assert!(min_pool(&img, 6).is_err());
    assert!(upsample_bilinear(&img, 0).is_err());
}

#[test]
fn upsample_half_pixel_weights() {
    let img = gray(2, 1, &[0.0, 1.0]);
    let out = upsample_bilinear(&img, 2).unwrap();
    assert_eq!((out.width(), out.height()), (4, 2));
    // centers at -0.25 (clamped), 0.25, 0.75, 1.25 (clamped)
    let expect = [0.0, 0.25, 0.75, 1.0];
    assert_eq!(&out.data()[..4], &expect);
    assert_eq!(&out.data()[4..], &expect);
}

#[test]
fn upsample_constant_and_identity() {
    let img = ImageF::filled(3, 2, 3, 0.3).unwrap();
    let out = upsample_bilinear(&img, 4).unwrap();
    assert_eq!((out.width(), out.height()), (12, 8));
    assert!(out.data().iter().all(|&v| v == 0.3));
    assert_eq!(upsample_bilinear(&img, 1).unwrap(), img);
}

#[test]
fn min_pool_cases() {
    let img = gray(2, 2, &[0.9, 0.2, 0.7, 1.0]);
    assert_eq!(min_pool(&img, 2).unwrap().data(), &[0.2]);
    let c = ImageF::filled(5, 3, 2, 0.4).unwrap();
    let pooled = min_pool(&c, 4).unwrap();
    assert_eq!((pooled.width(), pooled.height()), (2, 1));
    assert!(pooled.data().iter().all(|&v| v == 0.4));
}

#[test]
fn min_pool_matches_brute_force() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let img = ImageF::from_fn(8, 8, 1, |_, _, _| rng.random::<f32>()).unwrap();
    let pooled = min_pool(&img, 4).unwrap();
    for by in 0..2 {
        for bx in 0..2 {
            let mut m = f32::INFINITY;
            for y in by * 4..by * 4 + 4 {
                for x in bx * 4..bx * 4 + 4 {
                    m = m.min(img.get(x, y, 0));
                }
            }
            assert_eq!(pooled.get(bx, by, 0), m);
        }
    }
}

#[test]
fn multiply_cases() {
    let a = ImageF::from_fn(3, 2, 3, |x, y, c| (x + y + c) as f32 / 8.0).unwrap();
    let ones = ImageF::filled(3, 2, 3, 1.0).unwrap();
    let zeros = ImageF::filled(3, 2, 3, 0.0).unwrap();
    assert_eq!(multiply(&a, &ones).unwrap(), a);
    assert!(multiply(&a, &zeros).unwrap().data().iter().all(|&v| v == 0.0));
    let p = multiply(
        &ImageF::filled(2, 2, 1, 0.8).unwrap(),
        &ImageF::filled(2, 2, 1, 0.5).unwrap(),
    )
    .unwrap();
    assert!(p.data().iter().all(|&v| v == 0.4));
}

#[test]
fn multiply_broadcasts_single_channel() {
    let a = ImageF::filled(2, 1, 3, 0.5).unwrap();
    let s = gray(2, 1, &[1.0, 0.5]);
    let out = multiply(&a, &s).unwrap();
    assert_eq!(out.data(), &[0.5, 0.5, 0.5, 0.25, 0.25, 0.25]);
    assert_eq!(multiply(&s, &a).unwrap(), out);
    assert!(multiply(&a, &gray(1, 2, &[1.0, 1.0])).is_err());
    assert!(multiply(&a, &ImageF::filled(2, 1, 2, 1.0).unwrap()).is_err());
}

fn arb_image() -> impl Strategy<Value = ImageF> {
    (1usize..12, 1usize..12, prop_oneof![Just(1usize), Just(3usize)]).prop_flat_map(|(w, h, c)| {
        proptest::collection::vec(0.0f32..=1.0, w * h * c)
            .prop_map(move |d| ImageF::new(w, h, c, d).unwrap())
    })
}

proptest! {
    #[test]
    fn min_pool_below_box_mean(img in arb_image(), k in 0u32..3) {
        let f = 1usize << k;
        let lo = min_pool(&img, f).unwrap();
        let avg = downsample_box(&img, f).unwrap();
        for (m, a) in lo.data().iter().zip(avg.data()) {
            prop_assert!(m <= a);
        }
    }

    #[test]
    fn resampling_stays_finite_and_in_range(img in arb_image(), k in 0u32..3) {
        let f = 1usize << k;
        let up = upsample_bilinear(&downsample_box(&img, f).unwrap(), f).unwrap();
        prop_assert!(up.data().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }

    #[test]
    fn constant_survives_down_up(v in 0.0f32..=1.0, w in 1usize..20, h in 1usize..20, k in 0u32..4) {
        let f = 1usize << k;
        let img = ImageF::filled(w, h, 3, v).unwrap();
        let up = upsample_bilinear(&downsample_box(&img, f).unwrap(), f).unwrap();
        prop_assert!(up.data().iter().all(|&s| s == v));
    }

    #[test]
    fn multiply_commutes(img in arb_image(), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let other = ImageF::from_fn(img.width(), img.height(), img.channels(), |_, _, _| rng.random::<f32>()).unwrap();
        let ab = multiply(&img, &other).unwrap();
        prop_assert_eq!(&ab, &multiply(&other, &img).unwrap());
        prop_assert!(ab.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
