//! Brute-force grid references for small games.
//!
//! Nothing here uses the PPG map, the sensitivity iteration or the solver's
//! partition: attacker equilibria come from best-response sweeps on a grid,
//! zeros of `f2` from a separate scan, and every search is refined by
//! successive 10x zooms around the incumbent.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dse::{EquilibriumKind, EquilibriumResult, TieBreak};
use crate::error::{Error, Result};
use crate::game::{GameDefinition, Theta};

const MAX_SWEEPS: usize = 10_000;
const ZERO_SCAN: usize = 4096;
// grid Nash points overstate utilities by up to about this much
const TIE_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleGrid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub refine_rounds: usize,
    /// Upper bound on `nz^N`.
    pub budget: f64,
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self {
            nx: 201,
            ny: 201,
            nz: 201,
            refine_rounds: 3,
            budget: 1e8,
        }
    }
}

impl OracleGrid {
    pub fn validate(&self, game: &GameDefinition) -> Result<()> {
        if self.nx < 2 || self.ny < 2 || self.nz < 2 {
            return Err(Error::Config("oracle grid counts must be at least 2".into()));
        }
        let needed = (self.nz as f64).powi(game.n_attackers() as i32);
        if needed > self.budget {
            return Err(Error::Budget {
                needed,
                budget: self.budget,
            });
        }
        Ok(())
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| if k + 1 == n { b } else { a + (b - a) * k as f64 / (n - 1) as f64 })
        .collect()
}

/// Index of the largest value; ties go to the smallest index.
fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Gauss-Seidel best-response sweeps on per-coordinate grids, starting from
/// `start` (grid indices). Returns the grid Nash profile.
fn grid_nash(
    game: &GameDefinition,
    x: f64,
    y: f64,
    theta: &[f64],
    grids: &[Vec<f64>],
    start: Vec<usize>,
) -> Result<Vec<usize>> {
    let n = grids.len();
    let mut idx = start;
    let mut z: Vec<f64> = (0..n).map(|i| grids[i][idx[i]]).collect();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut history: Vec<Vec<usize>> = Vec::new();
    for _ in 0..MAX_SWEEPS {
        let mut changed = false;
        for i in 0..n {
            let (best, _) = argmax(grids[i].iter().map(|&v| {
                z[i] = v;
                game.attacker_utility(i, x, y, &z, theta)
            }));
            if best != idx[i] {
                changed = true;
                idx[i] = best;
            }
            z[i] = grids[i][idx[i]];
        }
        if !changed {
            return Ok(idx);
        }
        if !seen.insert(idx.clone()) {
            let first = history.iter().position(|h| *h == idx).unwrap_or(0);
            return Err(Error::Cycle {
                length: history.len() - first,
            });
        }
        history.push(idx.clone());
    }
    Err(Error::NonConvergence {
        what: "oracle best-response sweeps",
        iterations: MAX_SWEEPS,
        residual: f64::NAN,
    })
}

/// Grid Nash point of the attacker game, refined `refine_rounds` times.
pub fn oracle_nash(game: &GameDefinition, x: f64, y: f64, theta: &[f64], grid: &OracleGrid) -> Result<Vec<f64>> {
    grid.validate(game)?;
    let n = game.n_attackers();
    let lo = game.z_box().lo();
    let hi = game.z_box().hi();
    let mut grids: Vec<Vec<f64>> = (0..n).map(|i| linspace(lo[i], hi[i], grid.nz)).collect();
    let mut idx = grid_nash(game, x, y, theta, &grids, vec![0; n])?;
    for _ in 0..grid.refine_rounds {
        let mut start = vec![0; n];
        for i in 0..n {
            let h = grids[i][1] - grids[i][0];
            let c = grids[i][idx[i]];
            let a = (c - 10.0 * h).max(lo[i]);
            let b = (c + 10.0 * h).min(hi[i]);
            grids[i] = linspace(a, b, grid.nz);
            start[i] = grids[i]
                .iter()
                .enumerate()
                .min_by(|p, q| (p.1 - c).abs().total_cmp(&(q.1 - c).abs()))
                .map(|(k, _)| k)
                .unwrap_or(0);
        }
        idx = grid_nash(game, x, y, theta, &grids, start)?;
    }
    Ok((0..n).map(|i| grids[i][idx[i]]).collect())
}

/// Zeros of `f2(., theta)` strictly inside the leader domain, by a fine scan
/// and bisection.
pub fn oracle_zeros(game: &GameDefinition, theta: &[f64]) -> Vec<f64> {
    let (lo, hi) = game.x_range();
    let f = |x: f64| game.insider_slope(x, theta);
    let xs = linspace(lo, hi, ZERO_SCAN + 1);
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    let mut zeros = Vec::new();
    for k in 1..ZERO_SCAN {
        if vals[k].abs() <= tol {
            zeros.push(xs[k]);
        }
    }
    for k in 0..ZERO_SCAN {
        let (va, vb) = (vals[k], vals[k + 1]);
        if va.abs() <= tol || vb.abs() <= tol || (va > 0.0) == (vb > 0.0) {
            continue;
        }
        let (mut a, mut b) = (xs[k], xs[k + 1]);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if (f(m) > 0.0) == (va > 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        zeros.push(0.5 * (a + b));
    }
    zeros.sort_by(f64::total_cmp);
    zeros
}

fn tol_zero(game: &GameDefinition, theta: &[f64]) -> f64 {
    let (lo, hi) = game.x_range();
    let scale = linspace(lo, hi, ZERO_SCAN + 1)
        .into_iter()
        .fold(0.0f64, |m, x| m.max(game.insider_slope(x, theta).abs()));
    1e-10 * scale.max(f64::MIN_POSITIVE)
}

/// `(y, z, U_X)` at `x` with the insider's tie-broken response.
fn grid_value(
    game: &GameDefinition,
    x: f64,
    theta: &[f64],
    mode: TieBreak,
    tol: f64,
    grid: &OracleGrid,
) -> Result<(f64, Vec<f64>, f64)> {
    let (ylo, yhi) = game.y_range();
    let f2 = game.insider_slope(x, theta);
    let ys = if f2 > tol {
        vec![yhi]
    } else if f2 < -tol {
        vec![ylo]
    } else {
        linspace(ylo, yhi, grid.ny)
    };
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    for y in ys {
        let z = oracle_nash(game, x, y, theta, grid)?;
        let u = game.leader_utility(x, y, &z);
        let take = match &best {
            None => true,
            Some(b) => match mode {
                TieBreak::Weak => u < b.2,
                TieBreak::Strong => u > b.2,
            },
        };
        if take {
            best = Some((y, z, u));
        }
    }
    Ok(best.expect("nonempty y set"))
}

/// Tie-broken leader utility at a single `x`: `(y, z, U_X)`.
pub fn oracle_value(
    game: &GameDefinition,
    x: f64,
    theta: &[f64],
    mode: TieBreak,
    grid: &OracleGrid,
) -> Result<(f64, Vec<f64>, f64)> {
    grid.validate(game)?;
    grid_value(game, x, theta, mode, tol_zero(game, theta), grid)
}

/// Smallest pessimistic leader utility over a grid on `[lo, hi]`.
pub fn oracle_floor(game: &GameDefinition, theta: &[f64], lo: f64, hi: f64, grid: &OracleGrid) -> Result<f64> {
    grid.validate(game)?;
    let tol = tol_zero(game, theta);
    let mut xs = linspace(lo, hi, grid.nx);
    xs.extend(oracle_zeros(game, theta).into_iter().filter(|z| *z >= lo && *z <= hi));
    let vals: Vec<f64> = xs
        .par_iter()
        .map(|&x| grid_value(game, x, theta, TieBreak::Weak, tol, grid).map(|v| v.2))
        .collect::<Result<_>>()?;
    Ok(vals.into_iter().fold(f64::INFINITY, f64::min))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleTheta {
    pub theta: Theta,
    pub x: f64,
    pub y: f64,
    pub z: Vec<f64>,
    pub utility: f64,
    /// Best utility after the initial grid and after each refinement round.
    pub round_utilities: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleDseResult {
    pub kind: EquilibriumKind,
    pub theta_index: usize,
    pub per_theta: Vec<OracleTheta>,
}

impl OracleDseResult {
    pub fn best(&self) -> &OracleTheta {
        &self.per_theta[self.theta_index]
    }

    pub fn utility(&self) -> f64 {
        self.best().utility
    }

    pub fn into_equilibrium(self) -> EquilibriumResult {
        let b = self.best().clone();
        EquilibriumResult {
            kind: self.kind,
            x_star: b.x,
            y_star: b.y,
            z_star: b.z,
            theta_star: b.theta,
            theta_index: self.theta_index,
            utility: b.utility,
            iterations: 0,
            converged: true,
            trace: Vec::new(),
            flags: Vec::new(),
            per_theta: Vec::new(),
        }
    }
}

fn oracle_theta(game: &GameDefinition, theta: &[f64], mode: TieBreak, grid: &OracleGrid) -> Result<OracleTheta> {
    let (lo, hi) = game.x_range();
    let tol = tol_zero(game, theta);
    let zeros = oracle_zeros(game, theta);
    let score = |xs: Vec<f64>| -> Result<Vec<(f64, f64, Vec<f64>, f64)>> {
        xs.par_iter()
            .map(|&x| grid_value(game, x, theta, mode, tol, grid).map(|(y, z, u)| (x, y, z, u)))
            .collect()
    };
    let pick = |cands: &[(f64, f64, Vec<f64>, f64)]| -> (f64, f64, Vec<f64>, f64) {
        let mut best = cands[0].clone();
        for c in &cands[1..] {
            if c.3 > best.3 || (c.3 == best.3 && c.0 < best.0) {
                best = c.clone();
            }
        }
        best
    };
    let mut xs = linspace(lo, hi, grid.nx);
    xs.extend(zeros.iter().copied());
    let mut best = pick(&score(xs)?);
    let mut rounds = vec![best.3];
    let mut h = (hi - lo) / (grid.nx - 1) as f64;
    for _ in 0..grid.refine_rounds {
        let a = (best.0 - 10.0 * h).max(lo);
        let b = (best.0 + 10.0 * h).min(hi);
        let mut xs = linspace(a, b, grid.nx);
        xs.extend(zeros.iter().copied().filter(|z| *z >= a && *z <= b));
        let mut cands = score(xs)?;
        cands.push(best.clone());
        best = pick(&cands);
        rounds.push(best.3);
        h = (b - a) / (grid.nx - 1) as f64;
    }
    Ok(OracleTheta {
        theta: theta.to_vec(),
        x: best.0,
        y: best.1,
        z: best.2,
        utility: best.3,
        round_utilities: rounds,
    })
}

/// Grid maximization of the tie-broken leader utility over `x` and the
/// deception set. Ties go to the smaller `x`, then to the earlier parameter.
pub fn oracle_dse(game: &GameDefinition, mode: TieBreak, grid: &OracleGrid) -> Result<OracleDseResult> {
    grid.validate(game)?;
    let per_theta: Vec<OracleTheta> = game
        .theta_set()
        .iter()
        .map(|t| oracle_theta(game, t, mode, grid))
        .collect::<Result<_>>()?;
    let mut star = 0;
    for (i, t) in per_theta.iter().enumerate() {
        if t.utility > per_theta[star].utility + TIE_TOL {
            star = i;
        }
    }
    Ok(OracleDseResult {
        kind: match mode {
            TieBreak::Weak => EquilibriumKind::Wdse,
            TieBreak::Strong => EquilibriumKind::Sdse,
        },
        theta_index: star,
        per_theta,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleHne {
    pub x: f64,
    pub y: f64,
    pub z: Vec<f64>,
    /// Best leader improvement with the followers held fixed.
    pub gain: f64,
}

/// Largest leader improvement over `Omega_x` with `(y, z)` frozen: grid search
/// and a golden-section polish of the best cell.
fn leader_gain(game: &GameDefinition, x: f64, y: f64, z: &[f64], grid: &OracleGrid) -> f64 {
    let (lo, hi) = game.x_range();
    let u = |v: f64| game.leader_utility(v, y, z);
    let xs = linspace(lo, hi, grid.nx);
    let (k, mut best) = argmax(xs.iter().map(|&v| u(v)));
    let a = xs[k.saturating_sub(1)];
    let b = xs[(k + 1).min(xs.len() - 1)];
    let (v, _) = crate::middle::golden_min(|v| -u(v), a, b);
    best = best.max(u(v));
    (best - u(x)).max(0.0)
}

fn hne_candidates(
    game: &GameDefinition,
    x: f64,
    theta: &[f64],
    tol: f64,
    grid: &OracleGrid,
) -> Result<Vec<OracleHne>> {
    let (ylo, yhi) = game.y_range();
    let f2 = game.insider_slope(x, theta);
    let ys = if f2 > tol {
        vec![yhi]
    } else if f2 < -tol {
        vec![ylo]
    } else {
        linspace(ylo, yhi, grid.ny)
    };
    ys.into_iter()
        .map(|y| {
            let z = oracle_nash(game, x, y, theta, grid)?;
            let gain = leader_gain(game, x, y, &z, grid);
            Ok(OracleHne { x, y, z, gain })
        })
        .collect()
}

const EXACT_GAIN: f64 = 1e-9;

/// All grid HNE under `theta`: points where no leader deviation helps, with
/// the insider and attackers at their grid best responses. Local minima of the
/// leader gain are refined; a minimum counts when its gain vanishes or keeps
/// shrinking tenfold with each refinement.
pub fn oracle_hne(game: &GameDefinition, theta: &[f64], grid: &OracleGrid) -> Result<Vec<OracleHne>> {
    grid.validate(game)?;
    let (lo, hi) = game.x_range();
    let tol = tol_zero(game, theta);
    let zeros = oracle_zeros(game, theta);
    let xs = linspace(lo, hi, grid.nx);
    let evals: Vec<Vec<OracleHne>> = xs
        .par_iter()
        .chain(zeros.par_iter())
        .map(|&x| hne_candidates(game, x, theta, tol, grid))
        .collect::<Result<_>>()?;

    let mut found: Vec<OracleHne> = evals.iter().flatten().filter(|c| c.gain <= EXACT_GAIN).cloned().collect();

    // single-valued grid points: refine local minima of the gain
    let gains: Vec<Option<f64>> = evals[..xs.len()]
        .iter()
        .map(|c| if c.len() == 1 { Some(c[0].gain) } else { None })
        .collect();
    for k in 0..xs.len() {
        let Some(g) = gains[k] else { continue };
        if g <= EXACT_GAIN {
            continue;
        }
        let left = if k > 0 { gains[k - 1] } else { None };
        let right = if k + 1 < xs.len() { gains[k + 1] } else { None };
        if left.is_some_and(|l| l < g) || right.is_some_and(|r| r <= g) {
            continue;
        }
        let mut h = xs[1] - xs[0];
        let mut best = evals[k][0].clone();
        let first = best.gain;
        for _ in 0..grid.refine_rounds {
            let a = (best.x - 10.0 * h).max(lo);
            let b = (best.x + 10.0 * h).min(hi);
            let local: Vec<Vec<OracleHne>> = linspace(a, b, grid.nx)
                .par_iter()
                .map(|&x| hne_candidates(game, x, theta, tol, grid))
                .collect::<Result<_>>()?;
            for c in local.into_iter().flatten() {
                if c.gain < best.gain {
                    best = c;
                }
            }
            h = (b - a) / (grid.nx - 1) as f64;
        }
        let shrink = 0.1f64.powi(grid.refine_rounds.saturating_sub(1) as i32);
        if best.gain <= EXACT_GAIN || best.gain <= first * shrink {
            found.push(best);
        }
    }
    found.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    found.dedup_by(|a, b| (a.x - b.x).abs() <= 1e-6 && (a.y - b.y).abs() <= 1e-6);
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    fn small() -> OracleGrid {
        OracleGrid {
            nx: 101,
            ny: 21,
            nz: 101,
            refine_rounds: 2,
            budget: 1e8,
        }
    }

    #[test]
    fn nash_examples() {
        let r = scenarios::build_toy("robustness").unwrap();
        let g = OracleGrid::default();
        assert_eq!(oracle_nash(&r, 1.0, 2.0, &[0.0], &g).unwrap(), vec![0.0]);
        let z = oracle_nash(&r, 1.6, 2.0, &[-4.0 / 3.0], &g).unwrap();
        assert_eq!(z, vec![-2.0]);
        let m = scenarios::build_by_name("microgrid").unwrap();
        let z = oracle_nash(&m, 0.0, 0.0, &[1.0], &g).unwrap();
        for v in z {
            assert!((v - 5.0 / 3.0).abs() < 1e-4, "{v}");
        }
    }

    #[test]
    fn budget_guard() {
        let m = scenarios::build_random_microgrid(5, 1, 0.05).unwrap();
        let err = oracle_nash(&m, 0.0, 0.0, &[1.0], &OracleGrid::default()).unwrap_err();
        assert!(matches!(err, Error::Budget { .. }));
    }

    #[test]
    fn zeros_scan() {
        let n = scenarios::build_toy("nonexistence").unwrap();
        let z = oracle_zeros(&n, &[0.0]);
        assert_eq!(z.len(), 2);
        assert!((z[0] - 1.0).abs() < 1e-12 && (z[1] - 2.0).abs() < 1e-12);
        let w = scenarios::build_by_name("wireless").unwrap();
        assert!(oracle_zeros(&w, &[1.0]).is_empty());
    }

    #[test]
    fn robustness_dse_and_hne() {
        let r = scenarios::build_toy("robustness").unwrap();
        let d = oracle_dse(&r, TieBreak::Weak, &small()).unwrap();
        // coarse attacker grids overstate the second value slightly
        for t in &d.per_theta {
            assert!((t.utility - 21.0).abs() < 2e-3, "{t:?}");
        }
        let h = oracle_hne(&r, &[0.0], &OracleGrid::default()).unwrap();
        assert_eq!(h.len(), 1);
        assert!((h[0].x - 1.0).abs() < 1e-9 && h[0].y == 2.0 && h[0].z[0].abs() < 1e-9);
        let h = oracle_hne(&r, &[-4.0 / 3.0], &OracleGrid::default()).unwrap();
        assert_eq!(h.len(), 1);
        assert!((h[0].x - 1.0).abs() < 1e-9 && (h[0].z[0] + 4.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn nonexistence_refinement_climbs_to_one() {
        let n = scenarios::build_toy("nonexistence").unwrap();
        let d = oracle_dse(&n, TieBreak::Weak, &OracleGrid::default()).unwrap();
        let r = &d.per_theta[0].round_utilities;
        assert!(r.windows(2).all(|w| w[1] >= w[0]));
        assert!(r.iter().all(|u| *u < 1.0));
        assert!(1.0 - r[r.len() - 1] < 1e-4);
    }
}
