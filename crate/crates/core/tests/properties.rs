use dse_core::lower::{ppg_step, solve_nash, ContractionParams};
use dse_core::middle::{br_insider, partition_leader_domain, BrResult, Sign, DEFAULT_GRID_M, DEFAULT_ZERO_WIDTH};
use dse_core::scenarios::{build_by_name, build_random_microgrid, SCENARIO_NAMES};
use proptest::prelude::*;

fn scenario() -> impl Strategy<Value = &'static str> {
    prop::sample::select(SCENARIO_NAMES.to_vec())
}

fn unit() -> impl Strategy<Value = f64> {
    0.0..=1.0f64
}

fn lerp(lo: f64, hi: f64, t: f64) -> f64 {
    lo + (hi - lo) * t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ppg_step_stays_in_box(name in scenario(), tx in unit(), ty in unit(), seed in 0u64..1000) {
        use rand::SeedableRng;
        let game = build_by_name(name).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let z = game.z_box().sample(&mut rng);
        let (xl, xh) = game.x_range();
        let (yl, yh) = game.y_range();
        let p = ContractionParams::for_game(&game);
        let h = ppg_step(&game, lerp(xl, xh, tx), lerp(yl, yh, ty), &z, &game.theta_set()[0], p.gamma);
        prop_assert!(game.z_box().contains(&h));
    }

    #[test]
    fn nash_is_a_fixed_point(name in prop::sample::select(vec!["microgrid", "robustness", "nonexistence"]), tx in unit(), ty in unit()) {
        let game = build_by_name(name).unwrap();
        let (xl, xh) = game.x_range();
        let (yl, yh) = game.y_range();
        let (x, y) = (lerp(xl, xh, tx), lerp(yl, yh, ty));
        let th = &game.theta_set()[0];
        let p = ContractionParams::for_game(&game);
        let z = solve_nash(&game, x, y, th, &game.z_box().midpoint(), 1e-12, &p).unwrap().z;
        let h = ppg_step(&game, x, y, &z, th, p.gamma);
        let gap = z.iter().zip(&h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(gap <= 1e-10);
    }

    #[test]
    fn insider_response_follows_slope_sign(name in scenario(), tx in unit()) {
        let game = build_by_name(name).unwrap();
        let (xl, xh) = game.x_range();
        let x = lerp(xl, xh, tx);
        let th = &game.theta_set()[0];
        let f2 = game.insider_slope(x, th);
        let (yl, yh) = game.y_range();
        match br_insider(&game, x, th, 1e-12) {
            BrResult::Point(y) => prop_assert_eq!(y, if f2 > 0.0 { yh } else { yl }),
            BrResult::Interval(a, b) => {
                prop_assert!(f2.abs() <= 1e-12);
                prop_assert_eq!((a, b), (yl, yh));
            }
        }
    }

    #[test]
    fn random_microgrid_contracts(n in 2usize..12, seed in 0u64..500, scale in 0.0..1.0f64) {
        use rand::SeedableRng;
        let game = build_random_microgrid(n, seed, scale).unwrap();
        let p = ContractionParams::for_game(&game);
        prop_assert!(p.eta < 1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (z, w) = (game.z_box().sample(&mut rng), game.z_box().sample(&mut rng));
        let th = &game.theta_set()[0];
        let (hz, hw) = (ppg_step(&game, 1.0, 0.5, &z, th, p.gamma), ppg_step(&game, 1.0, 0.5, &w, th, p.gamma));
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        prop_assert!(d(&hz, &hw) <= p.eta * d(&z, &w) + 1e-12);
    }
}

#[test]
fn partitions_tile_the_domain_with_alternating_signs() {
    for name in SCENARIO_NAMES {
        let game = build_by_name(name).unwrap();
        let (lo, hi) = game.x_range();
        for th in game.theta_set() {
            let part = partition_leader_domain(&game, th, DEFAULT_GRID_M, DEFAULT_ZERO_WIDTH).unwrap();
            let ivs = &part.intervals;
            assert_eq!(ivs.first().unwrap().lo, lo, "{name}");
            assert_eq!(ivs.last().unwrap().hi, hi, "{name}");
            assert_eq!(part.zeros.len() + 1, ivs.len(), "{name}");
            for w in ivs.windows(2) {
                assert!(w[0].hi <= w[1].lo + 1e-12);
                assert_ne!(w[0].sign, w[1].sign, "{name}: adjacent intervals share a sign");
            }
            for iv in ivs {
                let f2 = game.insider_slope(iv.midpoint(), th);
                assert_eq!(f2 > 0.0, iv.sign == Sign::Positive, "{name} at {}", iv.midpoint());
            }
        }
    }
}
