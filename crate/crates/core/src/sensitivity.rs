//! Sensitivity of the attacker equilibrium `phi2(x)` to the leader action.
//!
//! Inside a singleton active region the PPG map `h` is affine in the clamp, so
//! `J phi2 = J1h + J3h J phi2` and the Jacobian is the fixed point of
//! `s <- J1h + J3h s`. The online variant evaluates `J1h`, `J3h` at the latest
//! PPG iterate instead of the exact equilibrium.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::game::{dist, GameDefinition};
use crate::lower::{active_region, ppg_step_into, ActiveRegionInfo, ContractionParams, DEFAULT_BOUNDARY_TOL};

const MAX_SENSITIVITY_ITERATIONS: usize = 1_000_000;

/// Running state of the interleaved Nash/sensitivity iteration.
#[derive(Clone, Debug, Default)]
pub struct SensitivityState {
    pub s: Vec<f64>,
    pub z_tilde: Vec<f64>,
    pub ell: usize,
    pub residual_history: Vec<f64>,
}

/// `(J1h, J3h)` at `z` for a singleton region:
/// `J1h = D (-gamma J1F)`, `J3h = D (I - gamma J3F)` with `D` the clamp Jacobian.
pub fn jacobians_of_h(
    game: &GameDefinition,
    x: f64,
    y: f64,
    z: &[f64],
    theta: &[f64],
    gamma: f64,
    region: &ActiveRegionInfo,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if !region.is_singleton {
        return Err(Error::RegionBoundary { x, delta: region.delta });
    }
    let n = z.len();
    let mask = region.interior_mask();
    let mut j1 = vec![0.0; n];
    game.model().pseudogradient_jac_x(x, y, z, theta, &mut j1);
    let j3f = game.model().pseudogradient_jac_z(x, y, z, theta);
    let mut j3 = DMatrix::zeros(n, n);
    for i in 0..n {
        j1[i] *= -gamma * mask[i];
        if mask[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            let eye = if i == j { 1.0 } else { 0.0 };
            j3[(i, j)] = eye - gamma * j3f[(i, j)];
        }
    }
    Ok((j1, j3))
}

/// Fixed-point iteration for `J phi2(x)` at the (converged) equilibrium `z_star`.
#[allow(clippy::too_many_arguments)]
pub fn offline_sensitivity(
    game: &GameDefinition,
    x: f64,
    y: f64,
    z_star: &[f64],
    theta: &[f64],
    gamma: f64,
    s0: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    let region = active_region(game, x, y, z_star, theta, gamma, DEFAULT_BOUNDARY_TOL);
    let (j1, j3) = jacobians_of_h(game, x, y, z_star, theta, gamma, &region)?;
    let mut s = s0.to_vec();
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_SENSITIVITY_ITERATIONS {
        let next: Vec<f64> = (0..s.len())
            .map(|i| j1[i] + (0..s.len()).map(|j| j3[(i, j)] * s[j]).sum::<f64>())
            .collect();
        residual = dist(&next, &s);
        s = next;
        if residual <= tol {
            return Ok(s);
        }
    }
    Err(Error::NonConvergence {
        what: "offline sensitivity iteration",
        iterations: MAX_SENSITIVITY_ITERATIONS,
        residual,
    })
}

#[derive(Clone, Debug)]
pub struct InnerLoopOutput {
    pub y: f64,
    pub z: Vec<f64>,
    pub s: Vec<f64>,
    pub warmstart_iterations: usize,
    pub sensitivity_iterations: usize,
    pub region: ActiveRegionInfo,
    /// `sigma >= delta(x)`: the returned sensitivity may sit in a different
    /// differentiability slice than `J phi2(x)`.
    pub region_violation: bool,
    pub state: SensitivityState,
}

/// `s <- D (s - gamma (J1F + J3F s))`, evaluated at `z`.
fn online_update(
    game: &GameDefinition,
    x: f64,
    y: f64,
    z: &[f64],
    theta: &[f64],
    gamma: f64,
    s: &mut [f64],
    scratch: &mut [f64],
    j1: &mut [f64],
) {
    let lo = game.z_box().lo();
    let hi = game.z_box().hi();
    let model = game.model();
    model.pseudogradient(x, y, z, theta, scratch);
    // mask from omega at z
    let mask: Vec<bool> = (0..z.len())
        .map(|i| {
            let w = z[i] - gamma * scratch[i];
            w >= lo[i] && w <= hi[i]
        })
        .collect();
    model.pseudogradient_jac_x(x, y, z, theta, j1);
    model.pseudogradient_jac_z_mul(x, y, z, theta, s, scratch);
    for i in 0..s.len() {
        s[i] = if mask[i] {
            s[i] - gamma * (j1[i] + scratch[i])
        } else {
            0.0
        };
    }
}

/// Warm-started Nash solve followed by the interleaved sensitivity loop. `y`
/// is the insider response on the current interval, held fixed.
#[allow(clippy::too_many_arguments)]
pub fn inner_loop(
    game: &GameDefinition,
    x: f64,
    y: f64,
    theta: &[f64],
    z0: &[f64],
    s0: &[f64],
    sigma: f64,
    params: &ContractionParams,
) -> Result<InnerLoopOutput> {
    if !(sigma > 0.0) {
        return Err(Error::Config(format!("inner-loop tolerance must be positive, got {sigma}")));
    }
    let n = z0.len();
    let gamma = params.gamma;
    let eta = params.eta;

    // warm start
    let mut z = z0.to_vec();
    game.z_box().project(&mut z);
    let mut next = vec![0.0; n];
    let mut warm = 0;
    loop {
        ppg_step_into(game, x, y, &z, theta, gamma, &mut next);
        let delta = dist(&next, &z);
        std::mem::swap(&mut z, &mut next);
        warm += 1;
        if delta <= sigma {
            break;
        }
        if warm >= MAX_SENSITIVITY_ITERATIONS {
            return Err(Error::NonConvergence {
                what: "inner-loop warm start",
                iterations: warm,
                residual: delta,
            });
        }
    }

    // interleaved Nash / sensitivity iteration
    let mut s = s0.to_vec();
    let mut scratch = vec![0.0; n];
    let mut j1 = vec![0.0; n];
    let mut history = Vec::new();
    let mut weighted = 0.0;
    let mut eta_pow = 1.0;
    let mut ell = 0;
    loop {
        ppg_step_into(game, x, y, &z, theta, gamma, &mut next);
        let step = dist(&next, &z);
        std::mem::swap(&mut z, &mut next);
        online_update(game, x, y, &z, theta, gamma, &mut s, &mut scratch, &mut j1);
        ell += 1;
        history.push(step);
        weighted = eta * weighted + step;
        eta_pow *= eta;
        if eta_pow.max(weighted) <= sigma {
            break;
        }
        if ell >= MAX_SENSITIVITY_ITERATIONS {
            return Err(Error::NonConvergence {
                what: "inner-loop sensitivity phase",
                iterations: ell,
                residual: weighted,
            });
        }
    }

    let region = active_region(game, x, y, &z, theta, gamma, DEFAULT_BOUNDARY_TOL);
    let region_violation = !region.is_singleton || sigma >= region.delta;
    Ok(InnerLoopOutput {
        y,
        z: z.clone(),
        s: s.clone(),
        warmstart_iterations: warm,
        sensitivity_iterations: ell,
        region,
        region_violation,
        state: SensitivityState {
            s,
            z_tilde: z,
            ell,
            residual_history: history,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lower::solve_nash;
    use crate::scenarios;

    fn robustness() -> GameDefinition {
        scenarios::build_toy("robustness").unwrap()
    }

    #[test]
    fn jacobians_interior_closed_form() {
        let g = robustness();
        let gamma = 0.25;
        let r = active_region(&g, 1.0, 2.0, &[0.0], &[0.0], gamma, 1e-9);
        let (j1, j3) = jacobians_of_h(&g, 1.0, 2.0, &[0.0], &[0.0], gamma, &r).unwrap();
        assert!(j1[0].abs() < 1e-15);
        assert!((j3[(0, 0)] - 0.5).abs() < 1e-15);

        let theta = [-4.0 / 3.0];
        let r = active_region(&g, -0.6, 2.0, &[0.8], &theta, gamma, 1e-9);
        let (j1, j3) = jacobians_of_h(&g, -0.6, 2.0, &[0.8], &theta, gamma, &r).unwrap();
        assert!((j1[0] + 2.0 / 3.0).abs() < 1e-14);
        assert!((j3[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn jacobians_zero_rows_when_saturated() {
        let g = robustness();
        let theta = [-4.0 / 3.0];
        let r = active_region(&g, 1.6, 2.0, &[-2.0], &theta, 0.25, 1e-9);
        let (j1, j3) = jacobians_of_h(&g, 1.6, 2.0, &[-2.0], &theta, 0.25, &r).unwrap();
        assert_eq!(j1[0], 0.0);
        assert_eq!(j3[(0, 0)], 0.0);
    }

    #[test]
    fn jacobians_reject_boundary() {
        let g = robustness();
        let r = active_region(&g, 1.0, 2.0, &[2.0], &[2.0], 0.25, 1e-9);
        assert!(matches!(
            jacobians_of_h(&g, 1.0, 2.0, &[2.0], &[2.0], 0.25, &r),
            Err(Error::RegionBoundary { .. })
        ));
    }

    #[test]
    fn offline_sensitivity_examples() {
        let g = robustness();
        let s = offline_sensitivity(&g, 1.0, 2.0, &[0.0], &[0.0], 0.25, &[0.0], 1e-14).unwrap();
        assert!(s[0].abs() < 1e-14);

        let theta = [-4.0 / 3.0];
        let s = offline_sensitivity(&g, -0.6, 2.0, &[0.8], &theta, 0.25, &[0.0], 1e-14).unwrap();
        assert!((s[0] + 4.0 / 3.0).abs() < 1e-12);

        let s = offline_sensitivity(&g, 1.6, 2.0, &[-2.0], &theta, 0.25, &[0.3], 1e-14).unwrap();
        assert_eq!(s[0], 0.0);
    }

    #[test]
    fn inner_loop_recovers_point_and_jacobian() {
        let g = robustness();
        let p = ContractionParams::lemma(2.0, 2.0, 0.25).unwrap();
        let theta = [-4.0 / 3.0];
        let out = inner_loop(&g, -0.6, 2.0, &theta, &[0.0], &[0.0], 1e-8, &p).unwrap();
        assert!((out.z[0] - 0.8).abs() < 1e-8);
        // finite difference of the Nash map
        let h = 1e-5;
        let up = solve_nash(&g, -0.6 + h, 2.0, &theta, &[0.8], 1e-14, &p).unwrap().z[0];
        let dn = solve_nash(&g, -0.6 - h, 2.0, &theta, &[0.8], 1e-14, &p).unwrap().z[0];
        let fd = (up - dn) / (2.0 * h);
        assert!((out.s[0] - fd).abs() < 1e-6);
        assert!((out.s[0] + 4.0 / 3.0).abs() < 1e-6);
        assert!(!out.region_violation);
    }

    #[test]
    fn inner_loop_keeps_exact_inputs() {
        let g = robustness();
        let p = ContractionParams::lemma(2.0, 2.0, 0.25).unwrap();
        let theta = [-4.0 / 3.0];
        let out = inner_loop(&g, -0.6, 2.0, &theta, &[0.8], &[-4.0 / 3.0], 1e-9, &p).unwrap();
        assert!((out.z[0] - 0.8).abs() <= 1e-9);
        assert!((out.s[0] + 4.0 / 3.0).abs() <= 1e-9);
    }
}
