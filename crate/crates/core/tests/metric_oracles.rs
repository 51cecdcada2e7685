mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unitstyle::metrics::{contour_ffe, emd, emd_hist, ffe, length_error, vde};
use unitstyle::unitseq::PitchContour;

#[test]
fn emd_matches_min_cost_flow() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=20);
        let a: Vec<u32> = (0..n).map(|_| rng.gen_range(0..=10)).collect();
        let b: Vec<u32> = (0..n).map(|_| rng.gen_range(0..=10)).collect();
        let fa: Vec<f64> = a.iter().map(|&x| x as f64).collect();
        let fb: Vec<f64> = b.iter().map(|&x| x as f64).collect();
        let got = emd_hist(&fa, &fb).unwrap();
        let want = common::min_cost_transport(&a, &b);
        assert!((got - want).abs() <= 1e-9, "{a:?} {b:?}: {got} vs {want}");
    }
}

#[test]
fn emd_is_symmetric_on_contours() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let (na, nb) = (rng.gen_range(1..300), rng.gen_range(1..300));
        let a = random_contour(&mut rng, na);
        let b = random_contour(&mut rng, nb);
        let (x, y) = (emd(&a, &b).unwrap(), emd(&b, &a).unwrap());
        assert!((x - y).abs() <= 1e-12 * x.max(1.0));
        assert_eq!(emd(&a, &a).unwrap(), 0.0);
    }
}

fn random_contour(rng: &mut ChaCha8Rng, n: usize) -> PitchContour<f64> {
    PitchContour::new(
        (0..n)
            .map(|_| if rng.gen_bool(0.7) { rng.gen_range(60.0..400.0) } else { 0.0 })
            .collect(),
    )
    .unwrap()
}

#[test]
fn vde_ffe_match_naive_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let n = rng.gen_range(1..200);
        let r = random_contour(&mut rng, n);
        // Perturb around the 20% boundary as well as far away from it.
        let s: Vec<f64> = r
            .values()
            .iter()
            .map(|&v| match rng.gen_range(0..4) {
                0 => 0.0,
                1 if v > 0.0 => v * rng.gen_range(0.7..1.3),
                2 => rng.gen_range(60.0..400.0),
                _ => v,
            })
            .collect();
        let s = PitchContour::new(s).unwrap();
        let (want_vde, want_ffe) = common::naive_vde_ffe(r.values(), s.values());
        assert_eq!(vde(&r.voiced(), &s.voiced()).unwrap(), want_vde);
        assert_eq!(ffe(r.values(), s.values(), &r.voiced(), &s.voiced()).unwrap(), want_ffe);
        let fe = contour_ffe(&r, &s).unwrap();
        assert_eq!((fe.vde, fe.ffe), (want_vde, want_ffe));
    }
}

#[test]
fn length_error_fixture_values() {
    for (name, r, s, want) in common::length_error_cases() {
        match (length_error(&r, &s), want) {
            (Ok(got), Ok(w)) => assert!((got - w).abs() < 1e-12, "{name}: {got} vs {w}"),
            (got, w) => assert_eq!(got, w, "{name}"),
        }
    }
}
