//! Bottom-level Nash game: projected pseudogradient (PPG) iteration
//! `z <- P[z - gamma F(x, y, z, theta)]` and the piecewise-affine structure of
//! the box projection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{dist, GameDefinition};

pub const DEFAULT_MAX_ITERATIONS: usize = 1_000_000;
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-9;

/// Step size and contraction constant of the PPG map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionParams {
    pub gamma: f64,
    pub eta: f64,
}

impl ContractionParams {
    /// Strongly monotone, Lipschitz pseudogradient: requires `gamma < 2 mu / kappa^2`,
    /// then `eta = sqrt(1 - gamma (2 mu - gamma kappa^2))`.
    pub fn lemma(mu: f64, kappa: f64, gamma: f64) -> Result<Self> {
        if !(mu > 0.0 && kappa >= mu) {
            return Err(Error::InvalidGame(format!("need 0 < mu <= kappa (mu = {mu}, kappa = {kappa})")));
        }
        let bound = 2.0 * mu / (kappa * kappa);
        if !(gamma > 0.0 && gamma < bound) {
            return Err(Error::Config(format!(
                "step {gamma} violates 0 < gamma < 2 mu / kappa^2 = {bound}"
            )));
        }
        let eta = (1.0 - gamma * (2.0 * mu - gamma * kappa * kappa)).max(0.0).sqrt();
        Ok(Self { gamma, eta })
    }

    /// Symmetric `J_3 F` with spectrum in `[mu, kappa]`: `gamma = 1 / kappa`
    /// gives `|I - gamma J_3 F| <= 1 - mu / kappa`.
    pub fn symmetric(mu: f64, kappa: f64) -> Result<Self> {
        if !(mu > 0.0 && kappa >= mu) {
            return Err(Error::InvalidGame(format!("need 0 < mu <= kappa (mu = {mu}, kappa = {kappa})")));
        }
        Ok(Self {
            gamma: 1.0 / kappa,
            eta: 1.0 - mu / kappa,
        })
    }

    /// Default parameters for a game.
    pub fn for_game(game: &GameDefinition) -> Self {
        let (mu, kappa) = (game.mu(), game.kappa());
        let params = if game.symmetric_jacobian() {
            Self::symmetric(mu, kappa)
        } else {
            let gamma = mu / (kappa * kappa);
            Self::lemma(mu, kappa, gamma)
        };
        // the builder already enforced 0 < mu <= kappa
        params.expect("validated monotonicity constants")
    }
}

/// Where `omega_i = z_i - gamma F_i` sits relative to `[z_min, z_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionTag {
    BelowLo,
    Interior,
    AboveHi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActiveRegionInfo {
    pub pattern: Vec<RegionTag>,
    pub is_singleton: bool,
    pub delta: f64,
}

impl ActiveRegionInfo {
    /// Diagonal of the clamp Jacobian.
    pub fn interior_mask(&self) -> Vec<f64> {
        self.pattern
            .iter()
            .map(|t| if *t == RegionTag::Interior { 1.0 } else { 0.0 })
            .collect()
    }
}

/// One PPG step `h(x, y, z)`.
pub fn ppg_step(game: &GameDefinition, x: f64, y: f64, z: &[f64], theta: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    ppg_step_into(game, x, y, z, theta, gamma, &mut out);
    out
}

pub(crate) fn ppg_step_into(
    game: &GameDefinition,
    x: f64,
    y: f64,
    z: &[f64],
    theta: &[f64],
    gamma: f64,
    out: &mut [f64],
) {
    game.model().pseudogradient(x, y, z, theta, out);
    let lo = game.z_box().lo();
    let hi = game.z_box().hi();
    for i in 0..z.len() {
        out[i] = (z[i] - gamma * out[i]).clamp(lo[i], hi[i]);
    }
}

#[derive(Clone, Debug)]
pub struct NashSolution {
    pub z: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Iterate the PPG map from `z0` until successive iterates differ by at most
/// `tol` (Euclidean norm).
pub fn solve_nash(
    game: &GameDefinition,
    x: f64,
    y: f64,
    theta: &[f64],
    z0: &[f64],
    tol: f64,
    params: &ContractionParams,
) -> Result<NashSolution> {
    solve_nash_capped(game, x, y, theta, z0, tol, params, DEFAULT_MAX_ITERATIONS)
}

#[allow(clippy::too_many_arguments)]
pub fn solve_nash_capped(
    game: &GameDefinition,
    x: f64,
    y: f64,
    theta: &[f64],
    z0: &[f64],
    tol: f64,
    params: &ContractionParams,
    max_iterations: usize,
) -> Result<NashSolution> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("Nash tolerance must be positive, got {tol}")));
    }
    let mut z = z0.to_vec();
    game.z_box().project(&mut z);
    let mut next = vec![0.0; z.len()];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iterations {
        ppg_step_into(game, x, y, &z, theta, params.gamma, &mut next);
        residual = dist(&next, &z);
        std::mem::swap(&mut z, &mut next);
        if residual <= tol {
            return Ok(NashSolution {
                z,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "PPG iteration",
        iterations: max_iterations,
        residual,
    })
}

/// Classify `omega = z - gamma F` against the attacker box.
pub fn active_region(
    game: &GameDefinition,
    x: f64,
    y: f64,
    z: &[f64],
    theta: &[f64],
    gamma: f64,
    boundary_tol: f64,
) -> ActiveRegionInfo {
    let n = z.len();
    let mut f = vec![0.0; n];
    game.model().pseudogradient(x, y, z, theta, &mut f);
    let lo = game.z_box().lo();
    let hi = game.z_box().hi();
    let mut pattern = Vec::with_capacity(n);
    let mut delta = f64::INFINITY;
    let mut singleton = true;
    for i in 0..n {
        let w = z[i] - gamma * f[i];
        let (tag, d) = if w < lo[i] {
            (RegionTag::BelowLo, lo[i] - w)
        } else if w > hi[i] {
            (RegionTag::AboveHi, w - hi[i])
        } else {
            (RegionTag::Interior, (w - lo[i]).min(hi[i] - w))
        };
        if d <= boundary_tol {
            singleton = false;
        }
        delta = delta.min(d);
        pattern.push(tag);
    }
    if !singleton {
        delta = 0.0;
    }
    ActiveRegionInfo {
        pattern,
        is_singleton: singleton,
        delta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    fn robustness() -> GameDefinition {
        scenarios::build_toy("robustness").unwrap()
    }

    #[test]
    fn lemma_params_match_closed_form() {
        let p = ContractionParams::lemma(2.0, 2.0, 0.25).unwrap();
        assert!((p.eta - 0.5).abs() < 1e-15);
        assert!(ContractionParams::lemma(2.0, 2.0, 1.0).is_err());
        assert!(ContractionParams::lemma(0.0, 2.0, 0.1).is_err());
    }

    #[test]
    fn ppg_step_examples() {
        let g = robustness();
        assert_eq!(ppg_step(&g, 1.0, 2.0, &[0.0], &[0.0], 0.25), vec![0.0]);
        let z = ppg_step(&g, 1.0, 2.0, &[2.0], &[0.0], 0.25);
        assert!((z[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ppg_fixed_point_at_negative_theta() {
        let g = robustness();
        let p = ContractionParams::lemma(2.0, 2.0, 0.25).unwrap();
        let sol = solve_nash(&g, -0.6, 2.0, &[-4.0 / 3.0], &[0.0], 1e-13, &p).unwrap();
        assert!((sol.z[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn solve_nash_from_far_start() {
        let g = robustness();
        let p = ContractionParams::lemma(2.0, 2.0, 0.25).unwrap();
        let sol = solve_nash(&g, 1.0, 2.0, &[0.0], &[2.0], 1e-10, &p).unwrap();
        assert!(sol.z[0].abs() < 1e-9);
        let h = ppg_step(&g, 1.0, 2.0, &sol.z, &[0.0], p.gamma);
        assert!(dist(&h, &sol.z) <= 1e-10);
    }

    #[test]
    fn solve_nash_cap_reports_residual() {
        let g = robustness();
        let p = ContractionParams::lemma(2.0, 2.0, 0.01).unwrap();
        let err = solve_nash_capped(&g, 1.0, 2.0, &[0.0], &[2.0], 1e-14, &p, 3).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 3, .. }));
    }

    #[test]
    fn active_region_examples() {
        let g = robustness();
        let info = active_region(&g, 1.0, 2.0, &[0.0], &[0.0], 0.25, 1e-9);
        assert_eq!(info.pattern, vec![RegionTag::Interior]);
        assert!(info.is_singleton);
        assert!((info.delta - 2.0).abs() < 1e-12);

        let theta = [-4.0 / 3.0];
        let info = active_region(&g, 1.6, 2.0, &[-2.0], &theta, 0.25, 1e-9);
        assert_eq!(info.pattern, vec![RegionTag::BelowLo]);
        // omega = -2 - 0.25 * 2 * (-2 + 2.1333..) = -2.0667
        assert!((info.delta - (0.5f64 * (2.0 - 1.6 * 4.0 / 3.0)).abs()).abs() < 1e-12);
        assert!((info.delta - 0.0667).abs() < 1e-4);

        // omega lands exactly on the upper face
        let info = active_region(&g, 1.0, 2.0, &[2.0], &[2.0], 0.25, 1e-9);
        assert!(!info.is_singleton);
        assert_eq!(info.delta, 0.0);
    }
}
