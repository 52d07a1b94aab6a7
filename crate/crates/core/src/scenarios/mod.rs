//! Built-in games.

mod microgrid;
mod toys;
mod wireless;

pub use microgrid::{build_microgrid, build_random_microgrid, Microgrid, MicrogridParams};
pub use toys::{build_toy, NonexistenceToy, RobustnessToy};
pub use wireless::{build_wireless, Wireless, WirelessParams};

use crate::error::{Error, Result};
use crate::game::GameDefinition;

pub const SCENARIO_NAMES: [&str; 4] = ["wireless", "microgrid", "nonexistence", "robustness"];

/// Build a scenario with its default parameters.
pub fn build_by_name(name: &str) -> Result<GameDefinition> {
    match name {
        "wireless" => build_wireless(&WirelessParams::default()),
        "microgrid" => build_microgrid(&MicrogridParams::default()),
        "nonexistence" | "robustness" => build_toy(name),
        other => Err(Error::Config(format!(
            "unknown scenario `{other}` (available: {})",
            SCENARIO_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{finite_difference_gradients, sample_monotonicity, GamePoint, GradientBundle};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn leader_utility_examples() {
        let r = build_toy("robustness").unwrap();
        assert_eq!(r.evaluate_leader_utility(1.0, 2.0, &[0.0]).unwrap(), 21.0);
        assert!(r.evaluate_leader_utility(3.0, 2.0, &[0.0]).is_err());
        assert_eq!(r.attacker_utility(0, 1.0, 0.0, &[0.0], &[0.0]), 0.0);

        let n = build_toy("nonexistence").unwrap();
        assert_eq!(n.evaluate_leader_utility(0.0, 0.5, &[0.0]).unwrap(), 0.0);
        assert_eq!(n.evaluate_leader_utility(1.0, 1.0, &[0.0]).unwrap(), -1.0);
    }

    #[test]
    fn pseudogradient_examples() {
        let r = build_toy("robustness").unwrap();
        assert_eq!(r.evaluate_pseudogradient(1.0, 2.0, &[0.0], &[0.0]).unwrap(), vec![0.0]);
        let f = r.evaluate_pseudogradient(-0.6, 2.0, &[0.0], &[-4.0 / 3.0]).unwrap();
        assert!((f[0] + 1.6).abs() < 1e-14);

        let m = build_by_name("microgrid").unwrap();
        let f = m.evaluate_pseudogradient(0.0, 0.0, &[0.0; 3], &[1.0]).unwrap();
        assert_eq!(f, vec![-1.0; 3]);
        let j = m.model().pseudogradient_jac_z(5.0, 0.0, &[0.0; 3], &[1.0]);
        assert!((j[(0, 0)] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn microgrid_examples() {
        let m = build_by_name("microgrid").unwrap();
        for (theta, zero) in [(1.0, 3.0), (0.8, 3.75), (1.2, 2.5)] {
            assert!(m.insider_slope(zero, &[theta]).abs() < 1e-12);
        }
        let u = m.evaluate_leader_utility(0.0, 0.0, &[2.5; 3]).unwrap();
        assert!((u - (20.0 - 11.25)).abs() < 1e-12);
        // b(1) = 1.5 shows up in the z-gradient
        let g = m.leader_grad_z(0.0, 1.0, &[0.0; 3]);
        assert!((g[0] + 1.5 * 1.5).abs() < 1e-14);
        assert!((m.mu() - 0.6).abs() < 1e-12);
        assert!((m.kappa() - 5.4).abs() < 1e-12);
    }

    #[test]
    fn microgrid_rejects_strong_coupling() {
        let p = MicrogridParams {
            coupling: 0.6,
            ..Default::default()
        };
        let err = build_microgrid(&p).unwrap_err();
        assert!(err.to_string().contains("row-sum"));
    }

    #[test]
    fn wireless_examples() {
        let w = build_by_name("wireless").unwrap();
        assert_eq!(w.insider_utility(1.0, 2.0, &[1.0]), 0.0);
        // SINR 2 at x = 1, z = 0; the insider term vanishes at y = 0
        let u = w.evaluate_leader_utility(1.0, 0.0, &[0.0; 3]).unwrap();
        assert!((u - 20.0).abs() < 1e-12);
        // perceived SINR with theta = theta0 equals the true one
        let perceived = -w.attacker_utility(0, 1.0, 0.0, &[0.0; 3], &[1.0]);
        assert!((perceived - 3f64.log2()).abs() < 1e-12);
        // no power, no eavesdropping gain
        let f = w.evaluate_pseudogradient(0.0, 0.0, &[1.0; 3], &[1.0]).unwrap();
        assert_eq!(f, vec![0.5, 0.6, 0.7]);
        assert!(w.mu() > 0.0 && w.mu() < w.kappa());
    }

    #[test]
    fn random_microgrid_is_deterministic() {
        let a = build_random_microgrid(20, 7, 0.1).unwrap();
        let b = build_random_microgrid(20, 7, 0.1).unwrap();
        let z = vec![1.0; 20];
        let ja = a.model().pseudogradient_jac_z(1.0, 0.0, &z, &[1.0]);
        let jb = b.model().pseudogradient_jac_z(1.0, 0.0, &z, &[1.0]);
        assert_eq!(ja, jb);
        assert!(a.mu() > 0.0);
        let c = build_random_microgrid(20, 8, 0.1).unwrap();
        assert_ne!(ja, c.model().pseudogradient_jac_z(1.0, 0.0, &z, &[1.0]));
    }

    #[test]
    fn unknown_names_list_the_registry() {
        let err = build_by_name("grid").unwrap_err().to_string();
        for name in SCENARIO_NAMES {
            assert!(err.contains(name));
        }
        assert!(build_toy("other").is_err());
    }

    #[test]
    fn analytic_gradients_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for name in SCENARIO_NAMES {
            let g = build_by_name(name).unwrap();
            for k in 0..100 {
                let p = GamePoint {
                    x: g.x_box().sample(&mut rng)[0],
                    y: g.y_box().sample(&mut rng)[0],
                    z: g.z_box().sample(&mut rng),
                    theta: g.theta_set()[k % g.theta_set().len()].clone(),
                };
                let a = GradientBundle::analytic(&g, &p);
                let f = finite_difference_gradients(&g, &p, 1e-6);
                let err = a.max_relative_error(&f);
                assert!(err <= 1e-5, "{name}: relative error {err} at {p:?}");
            }
        }
    }

    #[test]
    fn declared_monotonicity_holds_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for name in ["microgrid", "nonexistence", "robustness"] {
            let g = build_by_name(name).unwrap();
            let s = sample_monotonicity(&g, g.theta_set(), 1000, &mut rng);
            assert!(s.min_monotonicity >= g.mu() - 1e-9, "{name}: {s:?}");
            assert!(s.max_lipschitz <= g.kappa() + 1e-9, "{name}: {s:?}");
        }
        let w = build_by_name("wireless").unwrap();
        let s = sample_monotonicity(&w, w.theta_set(), 1000, &mut rng);
        assert!(s.max_lipschitz <= w.kappa() + 1e-9);
    }
}
