//! The two analytic toy games.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::game::{GameDefinition, GameModel, StrategyBox, TemplateLeaderUtility};

/// `U_X = -(x-1)^2 - (z-2)^2 + 25`, `U_Y = (|x|+1) y`, `U_Z = -(z - theta x)^2`.
#[derive(Debug, Clone, Copy)]
pub struct RobustnessToy;

impl GameModel for RobustnessToy {
    fn n_attackers(&self) -> usize {
        1
    }

    fn leader_utility(&self, x: f64, _y: f64, z: &[f64], _theta0: &[f64]) -> f64 {
        -(x - 1.0).powi(2) - (z[0] - 2.0).powi(2) + 25.0
    }

    fn leader_grad_x(&self, x: f64, _y: f64, _z: &[f64], _theta0: &[f64]) -> f64 {
        -2.0 * (x - 1.0)
    }

    fn leader_grad_z(&self, _x: f64, _y: f64, z: &[f64], _theta0: &[f64], out: &mut [f64]) {
        out[0] = -2.0 * (z[0] - 2.0);
    }

    fn insider_slope(&self, x: f64, _theta: &[f64]) -> f64 {
        x.abs() + 1.0
    }

    fn insider_intercept(&self, _x: f64) -> f64 {
        0.0
    }

    fn attacker_utility(&self, _i: usize, x: f64, _y: f64, z: &[f64], theta: &[f64]) -> f64 {
        -(z[0] - theta[0] * x).powi(2)
    }

    fn pseudogradient(&self, x: f64, _y: f64, z: &[f64], theta: &[f64], out: &mut [f64]) {
        out[0] = 2.0 * (z[0] - theta[0] * x);
    }

    fn pseudogradient_jac_x(&self, _x: f64, _y: f64, _z: &[f64], theta: &[f64], out: &mut [f64]) {
        out[0] = -2.0 * theta[0];
    }

    fn pseudogradient_jac_z(&self, _x: f64, _y: f64, _z: &[f64], _theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 2.0)
    }
}

pub fn robustness() -> Result<GameDefinition> {
    GameDefinition::builder("robustness", Arc::new(RobustnessToy))
        .x_box(-2.0, 2.0)
        .y_box(-2.0, 2.0)
        .z_box(StrategyBox::interval(-2.0, 2.0)?)
        .theta_set(vec![vec![0.0], vec![-4.0 / 3.0]])
        .theta_true(vec![0.0])
        .monotonicity(2.0, 2.0)
        .symmetric_jacobian(true)
        .build()
}

/// `U_X = -2x^2 + 2x - y x`, `U_Y = (x-1)(x-2) y`. The game has no attackers of
/// its own; a dummy attacker with `U_Z = -z^2/2` keeps the bottom level
/// well-posed and does not enter `U_X`.
#[derive(Debug, Clone)]
pub struct NonexistenceToy {
    leader: TemplateLeaderUtility,
}

impl NonexistenceToy {
    pub fn new() -> Self {
        Self {
            leader: TemplateLeaderUtility::new(
                |x, _| -2.0 * x * x + 2.0 * x,
                |x, _| -4.0 * x + 2.0,
                |y, _| -y,
                |_, _, out| out.iter_mut().for_each(|o| *o = 0.0),
            ),
        }
    }
}

impl Default for NonexistenceToy {
    fn default() -> Self {
        Self::new()
    }
}

impl GameModel for NonexistenceToy {
    fn n_attackers(&self) -> usize {
        1
    }

    fn leader_utility(&self, x: f64, y: f64, z: &[f64], theta0: &[f64]) -> f64 {
        self.leader.value(x, y, z, theta0)
    }

    fn leader_grad_x(&self, x: f64, y: f64, z: &[f64], theta0: &[f64]) -> f64 {
        self.leader.grad_x(x, y, z, theta0)
    }

    fn leader_grad_z(&self, x: f64, y: f64, z: &[f64], _theta0: &[f64], out: &mut [f64]) {
        self.leader.grad_z(x, y, z, out);
    }

    fn insider_slope(&self, x: f64, _theta: &[f64]) -> f64 {
        (x - 1.0) * (x - 2.0)
    }

    fn insider_intercept(&self, _x: f64) -> f64 {
        0.0
    }

    fn attacker_utility(&self, _i: usize, _x: f64, _y: f64, z: &[f64], _theta: &[f64]) -> f64 {
        -0.5 * z[0] * z[0]
    }

    fn pseudogradient(&self, _x: f64, _y: f64, z: &[f64], _theta: &[f64], out: &mut [f64]) {
        out[0] = z[0];
    }

    fn pseudogradient_jac_x(&self, _x: f64, _y: f64, _z: &[f64], _theta: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }

    fn pseudogradient_jac_z(&self, _x: f64, _y: f64, _z: &[f64], _theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0)
    }
}

/// Classical game: the deception set is `{theta0}`.
pub fn nonexistence() -> Result<GameDefinition> {
    GameDefinition::builder("nonexistence", Arc::new(NonexistenceToy::new()))
        .x_box(0.0, 3.0)
        .y_box(-1.0, 1.0)
        .z_box(StrategyBox::interval(-1.0, 1.0)?)
        .theta_set(vec![vec![0.0]])
        .theta_true(vec![0.0])
        .monotonicity(1.0, 1.0)
        .symmetric_jacobian(true)
        .build()
}

pub fn build_toy(name: &str) -> Result<GameDefinition> {
    match name {
        "robustness" => robustness(),
        "nonexistence" => nonexistence(),
        other => Err(Error::Config(format!(
            "unknown toy game `{other}` (available: nonexistence, robustness)"
        ))),
    }
}
