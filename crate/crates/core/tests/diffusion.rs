use relight_core::diffusion::*;
use relight_core::guidance::{build_coefficients, CoefficientField};
use relight_core::{Error, ImageF};
use relight_core::guidance::rgb_guidance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, ch: usize) -> ImageF {
    ImageF::from_fn(w, h, ch, |_, _, _| rng.random::<f32>()).unwrap()
}

#[test]
fn lambda_bounds() {
    assert!(DiffusionParams::new(0.0, 1).is_err());
    assert!(DiffusionParams::new(0.25, 1).is_err());
    assert!(DiffusionParams::new(0.249, 1).is_ok());
    let y = ImageF::filled(2, 2, 1, 0.0).unwrap();
    let c = CoefficientField::uniform(2, 2, 1.0).unwrap();
    assert!(step(&y, &c, 0.3).is_err());
    assert!(step(&y, &CoefficientField::uniform(3, 2, 1.0).unwrap(), 0.2).is_err());
}

#[test]
fn constant_and_zero_flux_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let flat = ImageF::filled(6, 5, 3, 0.37).unwrap();
    let c = CoefficientField::from_parts(
        6,
        5,
        (0..5 * 5).map(|_| rng.random::<f64>()).collect(),
        (0..4 * 6).map(|_| rng.random::<f64>()).collect(),
    )
    .unwrap();
    assert_eq!(step(&flat, &c, 0.24).unwrap(), flat);

    let noisy = random_image(&mut rng, 6, 5, 3);
    let zero = CoefficientField::uniform(6, 5, 0.0).unwrap();
    assert_eq!(step(&noisy, &zero, 0.24).unwrap(), noisy);
}

#[test]
fn two_pixel_step() {
    let y = ImageF::new(2, 1, 1, vec![0.0, 1.0]).unwrap();
    let c = CoefficientField::uniform(2, 1, 1.0).unwrap();
    let out = step(&y, &c, 0.2).unwrap();
    assert_eq!(out.data(), &[0.2, 0.8]);
}

#[test]
fn zero_iterations_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let y = random_image(&mut rng, 4, 4, 1);
    let c = CoefficientField::uniform(4, 4, 1.0).unwrap();
    assert_eq!(run(&y, &c, DiffusionParams::new(0.1, 0).unwrap()).unwrap(), y);
}

#[test]
fn heat_equation_reaches_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y = random_image(&mut rng, 8, 8, 1);
    let mean = y.mean();
    let c = CoefficientField::uniform(8, 8, 1.0).unwrap();
    let out = run(&y, &c, DiffusionParams::new(0.24, 10_000).unwrap()).unwrap();
    for &v in out.data() {
        assert!((v as f64 - mean).abs() < 1e-3);
    }
}

#[test]
fn bit_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let y = random_image(&mut rng, 16, 16, 3);
    let g = rgb_guidance(&random_image(&mut rng, 16, 16, 3), 0.2).unwrap();
    let params = DiffusionParams::new(0.2, 50).unwrap();
    let fast = run(&y, &build_coefficients(&g), params).unwrap();
    let slow = reference_run(&y, &g, params).unwrap();
    assert_eq!(fast, slow);
}

#[test]
fn reference_properties() {
    let flat = ImageF::filled(5, 5, 3, 0.6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = rgb_guidance(&random_image(&mut rng, 5, 5, 3), 0.1).unwrap();
    let params = DiffusionParams::new(0.24, 20).unwrap();
    assert_eq!(reference_run(&flat, &g, params).unwrap(), flat);
    let y = random_image(&mut rng, 5, 5, 3);
    let out = reference_run(&y, &g, params).unwrap();
    assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn schedule_parsing() {
    let s = CascadeSchedule::parse("16:10, 8:15,4:25,2:30", 0.24).unwrap();
    assert_eq!(s.total_steps(), 80);
    assert_eq!(s.to_string(), DEFAULT_SCHEDULE);
    assert_eq!(s, CascadeSchedule::default());
    for bad in ["", "8", "8:0", "4:5,8:5", "4:5,4:5", "3:5", "a:1", "4:-1"] {
        assert!(CascadeSchedule::parse(bad, 0.24).is_err(), "{bad}");
    }
    assert!(CascadeSchedule::parse("2:1", 0.25).is_err());
}

#[test]
fn degenerate_cascade_equals_run() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let y = random_image(&mut rng, 13, 9, 3);
    let g = rgb_guidance(&random_image(&mut rng, 13, 9, 3), 0.3).unwrap();
    let schedule = CascadeSchedule::single(17, 0.24).unwrap();
    let via_cascade = cascade(&y, &g, &schedule).unwrap();
    let direct = run(&y, &build_coefficients(&g), DiffusionParams::new(0.24, 17).unwrap()).unwrap();
    assert_eq!(via_cascade, direct);
}

#[test]
fn default_schedule_never_touches_full_resolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let y = random_image(&mut rng, 512, 512, 1);
    let g = rgb_guidance(&random_image(&mut rng, 512, 512, 3), 0.03).unwrap();
    let schedule = CascadeSchedule::default();
    assert_eq!(schedule.full_resolution_steps(), 0);
    let (out, profile) = cascade_profiled(&y, &build_coefficients(&g), &schedule).unwrap();
    assert_eq!(profile.steps, 80);
    assert_eq!((out.width(), out.height()), (512, 512));
}

#[test]
fn ladder_tracks_image_size() {
    let at = |n| CascadeSchedule::ladder_for(n, 0.24).unwrap().to_string();
    assert_eq!(at(512), DEFAULT_SCHEDULE);
    assert_eq!(at(256), "8:10,4:15,2:25,1:30");
    assert_eq!(at(1024), "32:10,16:15,8:25,4:30");
    assert_eq!(at(64), "2:10,1:70");
    assert_eq!(at(20), "1:80");
    for n in 1..2000 {
        assert_eq!(CascadeSchedule::ladder_for(n, 0.24).unwrap().total_steps(), 80);
    }
    assert!(CascadeSchedule::ladder_for(0, 0.24).is_err());
}

#[test]
fn cascade_handles_odd_sizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (w, h) in [(1, 1), (3, 7), (37, 21), (100, 3)] {
        let y = random_image(&mut rng, w, h, 3);
        let g = rgb_guidance(&random_image(&mut rng, w, h, 3), 0.1).unwrap();
        let out = cascade(&y, &g, &CascadeSchedule::default()).unwrap();
        assert_eq!((out.width(), out.height(), out.channels()), (w, h, 3));
        let (lo, hi) = y.min_max();
        let (olo, ohi) = out.min_max();
        assert!(olo >= lo && ohi <= hi);
    }
}

#[test]
fn cascade_of_constant_is_constant() {
    let y = ImageF::filled(40, 24, 3, 0.8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = rgb_guidance(&random_image(&mut rng, 40, 24, 3), 0.03).unwrap();
    assert_eq!(cascade(&y, &g, &CascadeSchedule::default()).unwrap(), y);
}

#[test]
fn cascade_rejects_mismatch() {
    let y = ImageF::filled(4, 4, 1, 0.0).unwrap();
    let g = rgb_guidance(&ImageF::filled(4, 5, 3, 0.0).unwrap(), 0.1).unwrap();
    assert!(matches!(
        cascade(&y, &g, &CascadeSchedule::default()),
        Err(Error::DimensionMismatch(_))
    ));
}

#[test]
fn coarse_levels_respect_blocking_edges() {
    // two halves separated by a fully blocking column; diffusion on the
    // pooled grid must not move mass between them, only the final
    // bilinear upsample touches the column next to the edge
    let (w, h) = (32, 16);
    let y = ImageF::from_fn(w, h, 1, |x, y, _| if x < 16 { ((x + y) % 5) as f32 / 4.0 } else { 0.1 }).unwrap();
    let mut horiz = vec![1.0; h * (w - 1)];
    for r in 0..h {
        horiz[r * (w - 1) + 15] = 0.0;
    }
    let c = CoefficientField::from_parts(w, h, horiz, vec![1.0; (h - 1) * w]).unwrap();
    let schedule = CascadeSchedule::parse("2:80", 0.24).unwrap();
    let out = cascade_with_coefficients(&y, &c, &schedule).unwrap();
    for r in 0..h {
        for x in 17..w {
            assert!((out.get(x, r, 0) - 0.1).abs() < 1e-6, "leak at {x},{r}");
        }
    }
}
