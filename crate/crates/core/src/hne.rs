//! Hierarchical Nash equilibria (all players move simultaneously) and the
//! consistency check between a DSE and an HNE.

use serde::{Deserialize, Serialize};

use crate::dse::{
    branch_utility, equilibrium_z, hierarchical_utility, insider_extremum, EquilibriumKind, EquilibriumResult, Flag, TieBreak,
};
use crate::error::Result;
use crate::game::GameDefinition;
use crate::lower::ContractionParams;
use crate::middle::{br_insider, default_tol_zero, golden_min, BrResult, DEFAULT_GRID_M};
use crate::oracle::{oracle_hne, OracleGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HneConfig {
    pub mode: TieBreak,
    /// Initial damping of the leader's best-response update; halved whenever
    /// the update direction flips.
    pub damping: f64,
    pub max_br_rounds: usize,
    pub n_starts: usize,
    /// Grid step of the unilateral-deviation check.
    pub verify_step: f64,
    pub verify_tol: f64,
    pub y_grid: usize,
    pub grid_m: usize,
    pub t1_tol: f64,
    /// Relative gap between one-sided slopes that counts as a kink.
    pub diff_tol: f64,
    /// Neighborhood radius as a fraction of the leader domain.
    pub nbhd_frac: f64,
    pub n_samples: usize,
    pub fd_step: f64,
    pub hne_match_tol: f64,
    pub oracle: OracleGrid,
}

impl Default for HneConfig {
    fn default() -> Self {
        Self {
            mode: TieBreak::Weak,
            damping: 0.5,
            max_br_rounds: 10_000,
            n_starts: 8,
            verify_step: 0.01,
            verify_tol: 1e-6,
            y_grid: 256,
            grid_m: DEFAULT_GRID_M,
            t1_tol: 1e-6,
            diff_tol: 1e-4,
            nbhd_frac: 1e-3,
            n_samples: 32,
            fd_step: 1e-6,
            hne_match_tol: 1e-4,
            oracle: OracleGrid::default(),
        }
    }
}

impl HneConfig {
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            errs.push(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        if self.n_starts == 0 || self.max_br_rounds == 0 {
            errs.push("n_starts and max_br_rounds must be positive".into());
        }
        for (name, v) in [
            ("verify_step", self.verify_step),
            ("verify_tol", self.verify_tol),
            ("t1_tol", self.t1_tol),
            ("diff_tol", self.diff_tol),
            ("nbhd_frac", self.nbhd_frac),
            ("fd_step", self.fd_step),
            ("hne_match_tol", self.hne_match_tol),
        ] {
            if !(v > 0.0) {
                errs.push(format!("{name} must be positive, got {v}"));
            }
        }
        if self.n_samples == 0 || self.y_grid == 0 {
            errs.push("n_samples and y_grid must be positive".into());
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.validation_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(crate::Error::Config(errs.join("; ")))
        }
    }
}

/// `dU_X/dx` at `(x, y, z)` with the followers frozen.
pub fn t1(game: &GameDefinition, x: f64, y: f64, z: &[f64]) -> f64 {
    game.leader_grad_x(x, y, z)
}

/// Insider response used for slopes near `x`: the branch response off a zero,
/// the tie-broken extremum on one.
fn branch_y(
    game: &GameDefinition,
    x: f64,
    theta: &[f64],
    mode: TieBreak,
    tol_zero: f64,
    y_grid: usize,
    params: &ContractionParams,
) -> Result<f64> {
    match br_insider(game, x, theta, tol_zero) {
        BrResult::Point(y) => Ok(y),
        BrResult::Interval(..) => Ok(insider_extremum(game, x, theta, mode, y_grid, params)?.y),
    }
}

/// Slope of `x -> U_X(x, y, phi2(x, y))` over `[a, b]` with `y` fixed.
fn branch_slope(
    game: &GameDefinition,
    a: f64,
    b: f64,
    y: f64,
    theta: &[f64],
    params: &ContractionParams,
) -> Result<f64> {
    let z0 = game.z_box().midpoint();
    let (_, ua) = branch_utility(game, a, y, theta, &z0, params)?;
    let (_, ub) = branch_utility(game, b, y, theta, &z0, params)?;
    Ok((ub - ua) / (b - a))
}

/// One-sided slopes of the tie-broken leader utility at `x`: `(left, right)`.
/// Each side differences the branch of the neighbouring interval, so a jump
/// of the zero-point value at `x` itself does not enter. A side outside the
/// leader domain is `None`.
#[allow(clippy::too_many_arguments)]
pub fn t2(
    game: &GameDefinition,
    x: f64,
    theta: &[f64],
    mode: TieBreak,
    tol_zero: f64,
    y_grid: usize,
    h: f64,
    params: &ContractionParams,
) -> Result<(Option<f64>, Option<f64>)> {
    let (lo, hi) = game.x_range();
    let left = if x - h >= lo {
        let y = branch_y(game, x - h, theta, mode, tol_zero, y_grid, params)?;
        Some(branch_slope(game, x - h, x, y, theta, params)?)
    } else {
        None
    };
    let right = if x + h <= hi {
        let y = branch_y(game, x + h, theta, mode, tol_zero, y_grid, params)?;
        Some(branch_slope(game, x, x + h, y, theta, params)?)
    } else {
        None
    };
    Ok((left, right))
}

/// Maximizer of `U_X(., y, z)` on the leader domain, by bisection on the sign
/// of its x-derivative (the leader utility is concave in `x`).
fn leader_br(game: &GameDefinition, y: f64, z: &[f64]) -> f64 {
    let (mut lo, mut hi) = game.x_range();
    let g = |x: f64| game.leader_grad_x(x, y, z);
    if g(lo) <= 0.0 {
        return lo;
    }
    if g(hi) >= 0.0 {
        return hi;
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if gm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Largest gain any single player gets from a grid deviation.
pub fn deviation_gain(game: &GameDefinition, x: f64, y: f64, z: &[f64], theta: &[f64], step: f64) -> f64 {
    let grid = |a: f64, b: f64| {
        let n = (((b - a) / step).ceil() as usize).max(1);
        (0..=n).map(move |k| a + (b - a) * k as f64 / n as f64)
    };
    let (xlo, xhi) = game.x_range();
    let ux = game.leader_utility(x, y, z);
    let mut best_x = xlo;
    let mut best = f64::NEG_INFINITY;
    for v in grid(xlo, xhi) {
        let u = game.leader_utility(v, y, z);
        if u > best {
            best = u;
            best_x = v;
        }
    }
    let h = (xhi - xlo) / (((xhi - xlo) / step).ceil().max(1.0));
    let (v, _) = golden_min(
        |v| -game.leader_utility(v, y, z),
        (best_x - h).max(xlo),
        (best_x + h).min(xhi),
    );
    let mut gain = best.max(game.leader_utility(v, y, z)) - ux;

    let (ylo, yhi) = game.y_range();
    let f2 = game.insider_slope(x, theta);
    gain = gain.max(f2 * (yhi - y)).max(f2 * (ylo - y));

    let mut zd = z.to_vec();
    for i in 0..z.len() {
        let base = game.attacker_utility(i, x, y, z, theta);
        for v in grid(game.z_box().lo()[i], game.z_box().hi()[i]) {
            zd[i] = v;
            gain = gain.max(game.attacker_utility(i, x, y, &zd, theta) - base);
        }
        zd[i] = z[i];
    }
    gain
}

struct Profile {
    x: f64,
    y: f64,
    z: Vec<f64>,
    utility: f64,
}

fn followers(
    game: &GameDefinition,
    x: f64,
    theta: &[f64],
    config: &HneConfig,
    tol_zero: f64,
    z0: &[f64],
    params: &ContractionParams,
) -> Result<(f64, Vec<f64>)> {
    match br_insider(game, x, theta, tol_zero) {
        BrResult::Point(y) => Ok((y, equilibrium_z(game, x, y, theta, z0, params)?)),
        BrResult::Interval(..) => {
            let e = insider_extremum(game, x, theta, config.mode, config.y_grid, params)?;
            Ok((e.y, e.z))
        }
    }
}

/// Damped best-response dynamics for the leader from `x0`, followed by a
/// choice of insider response that survives the deviation check.
fn search_from(
    game: &GameDefinition,
    theta: &[f64],
    x0: f64,
    config: &HneConfig,
    tol_zero: f64,
    params: &ContractionParams,
) -> Result<Option<Profile>> {
    let (lo, hi) = game.x_range();
    let width = hi - lo;
    let mut x = x0;
    let mut z = game.z_box().midpoint();
    let mut rho = config.damping;
    let mut d_prev = 0.0;
    for _ in 0..config.max_br_rounds {
        let (y, zn) = followers(game, x, theta, config, tol_zero, &z, params)?;
        z = zn;
        let d = leader_br(game, y, &z) - x;
        if d * d_prev < 0.0 {
            rho *= 0.5;
        }
        d_prev = d;
        let step = rho * d;
        x = (x + step).clamp(lo, hi);
        if step.abs() <= 1e-13 * (1.0 + x.abs()) {
            break;
        }
    }
    if x - lo <= 1e-9 * width {
        x = lo;
    } else if hi - x <= 1e-9 * width {
        x = hi;
    }

    let ys: Vec<f64> = match br_insider(game, x, theta, tol_zero) {
        BrResult::Point(y) => vec![y],
        BrResult::Interval(a, b) => {
            let m = config.y_grid;
            (0..=m).map(|k| a + (b - a) * k as f64 / m as f64).collect()
        }
    };
    let mut options = Vec::with_capacity(ys.len());
    for y in ys {
        let zy = equilibrium_z(game, x, y, theta, &z, params)?;
        let u = game.leader_utility(x, y, &zy);
        options.push(Profile { x, y, z: zy, utility: u });
    }
    // the insider's tie-break decides among valid responses
    options.sort_by(|a, b| match config.mode {
        TieBreak::Weak => a.utility.total_cmp(&b.utility),
        TieBreak::Strong => b.utility.total_cmp(&a.utility),
    });
    Ok(options
        .into_iter()
        .find(|p| deviation_gain(game, p.x, p.y, &p.z, theta, config.verify_step) <= config.verify_tol))
}

fn hne_result(p: Profile, theta: &[f64], flags: Vec<Flag>) -> EquilibriumResult {
    EquilibriumResult {
        kind: EquilibriumKind::Hne,
        x_star: p.x,
        y_star: p.y,
        z_star: p.z,
        theta_star: theta.to_vec(),
        theta_index: 0,
        utility: p.utility,
        iterations: 0,
        converged: true,
        trace: Vec::new(),
        flags,
        per_theta: Vec::new(),
    }
}

/// Simultaneous-move equilibria under the announced `theta`, deduplicated and
/// sorted by `x`. Falls back to the grid oracle when no start verifies.
pub fn solve_hne(game: &GameDefinition, theta: &[f64], config: &HneConfig) -> Result<Vec<EquilibriumResult>> {
    config.validate()?;
    let params = ContractionParams::for_game(game);
    let tol_zero = default_tol_zero(game, theta, config.grid_m);
    let (lo, hi) = game.x_range();
    let n = config.n_starts;
    let mut found: Vec<Profile> = Vec::new();
    for k in 0..n {
        let x0 = if n == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * k as f64 / (n - 1) as f64
        };
        if let Some(p) = search_from(game, theta, x0, config, tol_zero, &params)? {
            if !found.iter().any(|q| (q.x - p.x).abs() <= 1e-6 && (q.y - p.y).abs() <= 1e-6) {
                found.push(p);
            }
        }
    }
    if found.is_empty() {
        let grid = oracle_hne(game, theta, &config.oracle)?;
        return Ok(grid
            .into_iter()
            .map(|o| {
                let utility = game.leader_utility(o.x, o.y, &o.z);
                hne_result(
                    Profile {
                        x: o.x,
                        y: o.y,
                        z: o.z,
                        utility,
                    },
                    theta,
                    vec![Flag::HneOracleFallback],
                )
            })
            .collect());
    }
    found.sort_by(|a, b| a.x.total_cmp(&b.x));
    Ok(found.into_iter().map(|p| hne_result(p, theta, Vec::new())).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    T1Zero,
    NondiffSignMatch,
    DiffSignMatch,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub is_hne: bool,
    pub condition_met: Condition,
    pub t1_value: f64,
    pub t2_left: Option<f64>,
    pub t2_right: Option<f64>,
    pub differentiable: bool,
    pub neighborhood_radius: f64,
    /// `T1 * T2` at the sampled points of the punctured neighborhood.
    pub sign_products: Vec<f64>,
    /// Whether the tie-broken utility was monotone on each half neighborhood.
    pub hypothesis_ok: bool,
    /// Verdict of the sign conditions; absent when the hypothesis fails.
    pub theorem_verdict: Option<bool>,
    /// Whether `x*` matches an equilibrium found by [`solve_hne`].
    pub direct_verdict: bool,
    pub conflict: bool,
    pub hne_x: Vec<f64>,
    pub hne_utility: Vec<f64>,
}

fn monotone(seq: &[f64]) -> bool {
    let tol = |a: f64, b: f64| 1e-12 * (1.0 + a.abs().max(b.abs()));
    let up = seq.windows(2).all(|w| w[1] >= w[0] - tol(w[0], w[1]));
    let down = seq.windows(2).all(|w| w[1] <= w[0] + tol(w[0], w[1]));
    up || down
}

/// Decide whether a DSE is also an HNE, both through the sign conditions on
/// `T1` and `T2` around `x*` and by direct comparison with [`solve_hne`]. The
/// reported `is_hne` is the direct verdict; `conflict` records disagreement.
pub fn check_consistency(
    game: &GameDefinition,
    dse: &EquilibriumResult,
    config: &HneConfig,
) -> Result<ConsistencyReport> {
    config.validate()?;
    let mode = match dse.kind {
        EquilibriumKind::Sdse => TieBreak::Strong,
        _ => TieBreak::Weak,
    };
    let theta = dse.theta_star.clone();
    let params = ContractionParams::for_game(game);
    let tol_zero = default_tol_zero(game, &theta, config.grid_m);
    let (lo, hi) = game.x_range();
    let xs = dse.x_star;
    let r = config.nbhd_frac * (hi - lo);
    let h = config.fd_step;
    let ut = |v: f64| hierarchical_utility(game, v, &theta, mode, tol_zero, config.y_grid, &params).map(|e| e.value);
    let t1_at = |v: f64| t1(game, v, dse.y_star, &dse.z_star);

    let t1_value = t1_at(xs);
    let (t2_left, t2_right) = t2(game, xs, &theta, mode, tol_zero, config.y_grid, h, &params)?;
    let differentiable = match (t2_left, t2_right) {
        (Some(a), Some(b)) => (a - b).abs() <= config.diff_tol * 1f64.max(a.abs()).max(b.abs()),
        _ => true,
    };

    let n = config.n_samples;
    let left: Vec<f64> = (1..=n).rev().map(|k| xs - r * k as f64 / n as f64).filter(|v| *v >= lo).collect();
    let right: Vec<f64> = (1..=n).map(|k| xs + r * k as f64 / n as f64).filter(|v| *v <= hi).collect();
    let u0 = ut(xs)?;
    let mut seq_l = left.iter().map(|&v| ut(v)).collect::<Result<Vec<_>>>()?;
    seq_l.push(u0);
    let mut seq_r = vec![u0];
    seq_r.extend(right.iter().map(|&v| ut(v)).collect::<Result<Vec<_>>>()?);
    let hypothesis_ok = monotone(&seq_l) && monotone(&seq_r);

    let mut sign_products = Vec::with_capacity(left.len() + right.len());
    for &v in left.iter().chain(&right) {
        let y = branch_y(game, v, &theta, mode, tol_zero, config.y_grid, &params)?;
        let slope = branch_slope(game, (v - h).max(lo), (v + h).min(hi), y, &theta, &params)?;
        sign_products.push(t1_at(v) * slope);
    }
    let punctured_ok = !sign_products.is_empty() && sign_products.iter().all(|p| *p > 0.0);
    let condition_met = if t1_value.abs() <= config.t1_tol {
        Condition::T1Zero
    } else if !differentiable {
        if punctured_ok {
            Condition::NondiffSignMatch
        } else {
            Condition::None
        }
    } else {
        let slope = match (t2_left, t2_right) {
            (Some(a), Some(b)) => 0.5 * (a + b),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => 0.0,
        };
        if punctured_ok && t1_value * slope > 0.0 {
            Condition::DiffSignMatch
        } else {
            Condition::None
        }
    };
    let theorem_verdict = hypothesis_ok.then_some(condition_met != Condition::None);

    let hne = solve_hne(game, &theta, &HneConfig { mode, ..config.clone() })?;
    let hne_x: Vec<f64> = hne.iter().map(|e| e.x_star).collect();
    let hne_utility: Vec<f64> = hne.iter().map(|e| e.utility).collect();
    let direct_verdict = hne_x.iter().any(|x| (x - xs).abs() <= config.hne_match_tol);

    Ok(ConsistencyReport {
        is_hne: direct_verdict,
        condition_met,
        t1_value,
        t2_left,
        t2_right,
        differentiable,
        neighborhood_radius: r,
        sign_products,
        hypothesis_ok,
        theorem_verdict,
        direct_verdict,
        conflict: theorem_verdict.is_some_and(|t| t != direct_verdict),
        hne_x,
        hne_utility,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dse::{solve_dse, SolverConfig};
    use crate::scenarios;

    #[test]
    fn robustness_hne() {
        let r = scenarios::build_toy("robustness").unwrap();
        let c = HneConfig::default();
        let h = solve_hne(&r, &[0.0], &c).unwrap();
        assert_eq!(h.len(), 1);
        assert!((h[0].x_star - 1.0).abs() < 1e-9 && h[0].y_star == 2.0 && h[0].z_star[0].abs() < 1e-9);
        let h = solve_hne(&r, &[-4.0 / 3.0], &c).unwrap();
        assert_eq!(h.len(), 1);
        assert!((h[0].x_star - 1.0).abs() < 1e-9);
        assert!((h[0].z_star[0] + 4.0 / 3.0).abs() < 1e-9);
        assert!((h[0].utility - (25.0 - 100.0 / 9.0)).abs() < 1e-8);
    }

    #[test]
    fn nonexistence_and_microgrid_hne() {
        let n = scenarios::build_toy("nonexistence").unwrap();
        let h = solve_hne(&n, &[0.0], &HneConfig::default()).unwrap();
        assert_eq!(h.len(), 1);
        assert!((h[0].x_star - 0.25).abs() < 1e-9 && h[0].y_star == 1.0);

        let m = scenarios::build_by_name("microgrid").unwrap();
        let h = solve_hne(&m, &[1.0], &HneConfig::default()).unwrap();
        assert_eq!(h.len(), 1);
        assert!(h[0].x_star.abs() < 1e-12 && h[0].y_star == 1.0);
    }

    #[test]
    fn robustness_consistency() {
        let r = scenarios::build_toy("robustness").unwrap();
        for (theta, expect) in [(0.0, true), (-4.0 / 3.0, false)] {
            let g = r.with_theta_set(vec![vec![theta]]).unwrap();
            let dse = solve_dse(&g, &SolverConfig::default()).unwrap();
            let rep = check_consistency(&g, &dse, &HneConfig::default()).unwrap();
            assert_eq!(rep.is_hne, expect, "{rep:?}");
            assert_eq!(rep.theorem_verdict, Some(expect));
            assert!(!rep.conflict);
        }
    }

    #[test]
    fn t1_examples() {
        let r = scenarios::build_toy("robustness").unwrap();
        assert_eq!(t1(&r, 1.0, 2.0, &[0.0]), 0.0);
        assert!((t1(&r, -0.6, 2.0, &[0.8]) - 3.2).abs() < 1e-12);
    }
}
