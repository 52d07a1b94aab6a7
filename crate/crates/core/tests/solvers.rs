use dse_core::dse::{solve_dse, EquilibriumKind, Flag, SolverConfig, TieBreak};
use dse_core::hne::{check_consistency, solve_hne, HneConfig};
use dse_core::oracle::{oracle_dse, OracleGrid};
use dse_core::scenarios::{build_by_name, build_random_microgrid};

#[test]
fn robustness_both_parameters_reach_21() {
    let game = build_by_name("robustness").unwrap();
    let r = solve_dse(&game, &SolverConfig::default()).unwrap();
    assert_eq!(r.kind, EquilibriumKind::Wdse);
    for t in &r.per_theta {
        assert!((t.utility - 21.0).abs() <= 1e-4, "{t:?}");
    }
    // ties go to the first parameter
    assert_eq!(r.theta_index, 0);
    assert!((r.x_star - 1.0).abs() <= 1e-4);
}

#[test]
fn robustness_consistency_verdicts() {
    let game = build_by_name("robustness").unwrap();
    let mut verdicts = Vec::new();
    for th in game.theta_set() {
        let g = game.with_theta_set(vec![th.clone()]).unwrap();
        let dse = solve_dse(&g, &SolverConfig::default()).unwrap();
        let rep = check_consistency(&g, &dse, &HneConfig::default()).unwrap();
        assert!(!rep.conflict);
        verdicts.push(rep.is_hne);
    }
    assert_eq!(verdicts, [true, false]);
}

#[test]
fn nonexistence_weak_supremum_is_flagged() {
    let game = build_by_name("nonexistence").unwrap();
    let r = solve_dse(&game, &SolverConfig::default()).unwrap();
    assert!(r.flags.iter().any(|f| matches!(f, Flag::SupremumNotAttained { .. })));
    assert!((r.utility - 1.0).abs() <= 1e-6);

    let eps = solve_dse(&game, &SolverConfig { epsilon: 0.01, ..Default::default() }).unwrap();
    assert_eq!(eps.kind, EquilibriumKind::EpsWdse);
    assert!(eps.utility >= 0.99 && eps.utility <= 1.0 + 1e-9);
}

#[test]
fn strong_mode_is_never_above_weak() {
    for name in ["robustness", "nonexistence", "microgrid"] {
        let game = build_by_name(name).unwrap();
        let weak = solve_dse(&game, &SolverConfig::default()).unwrap();
        let strong = solve_dse(&game, &SolverConfig { mode: TieBreak::Strong, ..Default::default() }).unwrap();
        assert!(strong.utility >= weak.utility - 1e-6, "{name}: strong {} weak {}", strong.utility, weak.utility);
    }
}

#[test]
fn toys_agree_with_oracle() {
    let grid = OracleGrid { nx: 101, ny: 101, nz: 101, ..Default::default() };
    for name in ["robustness", "nonexistence"] {
        let game = build_by_name(name).unwrap();
        let r = solve_dse(&game, &SolverConfig::default()).unwrap();
        let o = oracle_dse(&game, TieBreak::Weak, &grid).unwrap();
        assert!((r.utility - o.utility()).abs() <= 5e-3, "{name}: {} vs {}", r.utility, o.utility());
    }
}

#[test]
fn hne_points_are_unilaterally_stable() {
    let game = build_by_name("microgrid").unwrap();
    for th in game.theta_set() {
        let found = solve_hne(&game, th, &HneConfig::default()).unwrap();
        assert!(!found.is_empty());
        for e in &found {
            let gain = dse_core::hne::deviation_gain(&game, e.x_star, e.y_star, &e.z_star, th, 0.01);
            assert!(gain <= 1e-6, "gain {gain}");
        }
    }
}

#[test]
fn solver_is_deterministic() {
    let game = build_random_microgrid(20, 7, 0.1).unwrap();
    let a = solve_dse(&game, &SolverConfig::default()).unwrap();
    let b = solve_dse(&game, &SolverConfig::default()).unwrap();
    assert_eq!(a, b);
}
