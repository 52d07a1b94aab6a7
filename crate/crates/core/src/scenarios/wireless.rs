//! Secure wireless transmission with a relay insider and jamming eavesdroppers.
//!
//! The source picks its power `x`; the relay insider picks its forwarding
//! effort `y`; eavesdropper `i` picks jamming power `z_i`. Deception misreports
//! the source-relay channel `h_rd` seen by the followers.

use std::f64::consts::LN_2;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameDefinition, GameModel, StrategyBox};

const GRID: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WirelessParams {
    pub n: usize,
    pub h_rd0: f64,
    pub h_ed: f64,
    pub eta_noise: f64,
    pub d1: f64,
    pub d3: f64,
    pub d4: f64,
    pub d2: Vec<f64>,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub z_range: [f64; 2],
    pub theta_set: Vec<f64>,
}

impl Default for WirelessParams {
    fn default() -> Self {
        Self {
            n: 3,
            h_rd0: 1.0,
            h_ed: 0.8,
            eta_noise: 0.5,
            d1: 10.0,
            d3: 2.0,
            d4: 7.0,
            d2: vec![0.5, 0.6, 0.7],
            x_range: [0.0, 3.0],
            y_range: [0.0, 2.0],
            z_range: [0.0, 5.0],
            theta_set: vec![0.8, 1.0, 1.2],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Wireless {
    h_rd0: f64,
    /// `h_ed^2`
    c: f64,
    eta_noise: f64,
    d1: f64,
    d3: f64,
    d4: f64,
    d2: Vec<f64>,
}

impl Wireless {
    fn interference(&self, z: &[f64]) -> f64 {
        self.eta_noise + self.c * z.iter().sum::<f64>()
    }

    /// Source SINR at the destination under the true channel.
    pub fn sinr_true(&self, x: f64, z: &[f64]) -> f64 {
        self.h_rd0 * self.h_rd0 * x / self.interference(z)
    }

    /// Common entry of `J_3 F` (the matrix is this value times `1 1^T`).
    fn curvature(&self, a: f64, s: f64) -> f64 {
        self.c * self.c / LN_2 * a * (2.0 * s + a) / (s * s * (s + a) * (s + a))
    }
}

impl GameModel for Wireless {
    fn n_attackers(&self) -> usize {
        self.d2.len()
    }

    fn leader_utility(&self, x: f64, y: f64, z: &[f64], _theta0: &[f64]) -> f64 {
        self.d1 * self.sinr_true(x, z) - self.d4 * x * y
    }

    fn leader_grad_x(&self, _x: f64, y: f64, z: &[f64], _theta0: &[f64]) -> f64 {
        self.d1 * self.h_rd0 * self.h_rd0 / self.interference(z) - self.d4 * y
    }

    fn leader_grad_z(&self, x: f64, _y: f64, z: &[f64], _theta0: &[f64], out: &mut [f64]) {
        let s = self.interference(z);
        let v = -self.d1 * self.h_rd0 * self.h_rd0 * x * self.c / (s * s);
        out.iter_mut().for_each(|o| *o = v);
    }

    fn insider_slope(&self, x: f64, _theta: &[f64]) -> f64 {
        x
    }

    fn insider_intercept(&self, x: f64) -> f64 {
        -self.d3 * x
    }

    fn attacker_utility(&self, i: usize, x: f64, _y: f64, z: &[f64], theta: &[f64]) -> f64 {
        let a = theta[0] * theta[0] * x;
        -(1.0 + a / self.interference(z)).log2() - self.d2[i] * z[i]
    }

    fn pseudogradient(&self, x: f64, _y: f64, z: &[f64], theta: &[f64], out: &mut [f64]) {
        let a = theta[0] * theta[0] * x;
        let s = self.interference(z);
        let common = self.c / LN_2 * a / (s * (s + a));
        for (o, d2) in out.iter_mut().zip(&self.d2) {
            *o = d2 - common;
        }
    }

    fn pseudogradient_jac_x(&self, x: f64, _y: f64, z: &[f64], theta: &[f64], out: &mut [f64]) {
        let t2 = theta[0] * theta[0];
        let s = self.interference(z);
        let v = -self.c / LN_2 * t2 / ((s + t2 * x) * (s + t2 * x));
        out.iter_mut().for_each(|o| *o = v);
    }

    fn pseudogradient_jac_z(&self, x: f64, _y: f64, z: &[f64], theta: &[f64]) -> DMatrix<f64> {
        let n = self.d2.len();
        let k = self.curvature(theta[0] * theta[0] * x, self.interference(z));
        DMatrix::from_element(n, n, k)
    }

    fn pseudogradient_jac_z_mul(&self, x: f64, _y: f64, z: &[f64], theta: &[f64], v: &[f64], out: &mut [f64]) {
        let k = self.curvature(theta[0] * theta[0] * x, self.interference(z));
        let total: f64 = v.iter().sum();
        out.iter_mut().for_each(|o| *o = k * total);
    }
}

/// Monotonicity constants for the wireless game.
///
/// `J_3 F` is a multiple of `1 1^T`, so the global modulus is zero. The
/// declared `mu` is the curvature of the single active eavesdropper (smallest
/// jamming cost) at its closed-form equilibrium, minimized over an `(x, theta)`
/// grid; `kappa` is the largest `||J_3 F||_2` over an `(x, sum z)` grid.
fn estimate_constants(model: &Wireless, p: &WirelessParams, thetas: &[f64]) -> Result<(f64, f64)> {
    let n = p.d2.len() as f64;
    let d2min = p.d2.iter().cloned().fold(f64::INFINITY, f64::min);
    let s_max = model.eta_noise + model.c * n * p.z_range[1];
    let s_min = model.eta_noise + model.c * n * p.z_range[0];
    let mut mu = f64::INFINITY;
    let mut kappa: f64 = 0.0;
    for &theta in thetas {
        for ix in 0..=GRID {
            let x = p.x_range[0] + (p.x_range[1] - p.x_range[0]) * ix as f64 / GRID as f64;
            let a = theta * theta * x;
            for is in 0..=GRID {
                let s = s_min + (s_max - s_min) * is as f64 / GRID as f64;
                kappa = kappa.max(n * model.curvature(a, s));
            }
            // active player i* solves d2min = (c / ln 2) a / (S (S + a))
            if a <= 0.0 || model.c / LN_2 * a / (s_min * (s_min + a)) <= d2min {
                continue;
            }
            let k = model.c * a / (d2min * LN_2);
            let s_star = (0.5 * (-a + (a * a + 4.0 * k).sqrt())).min(model.eta_noise + model.c * p.z_range[1]);
            mu = mu.min(model.curvature(a, s_star));
        }
    }
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::InvalidGame(
            "wireless monotonicity estimate is not positive (no eavesdropper is ever active)".into(),
        ));
    }
    Ok((0.9 * mu, 1.1 * kappa))
}

pub fn build_wireless(params: &WirelessParams) -> Result<GameDefinition> {
    let p = params;
    if p.n == 0 || p.d2.len() != p.n {
        return Err(Error::InvalidGame(format!(
            "wireless needs n >= 1 jamming costs (n = {}, got {})",
            p.n,
            p.d2.len()
        )));
    }
    if p.d2.iter().any(|d| *d <= 0.0) || p.eta_noise <= 0.0 {
        return Err(Error::InvalidGame("jamming costs and noise power must be positive".into()));
    }
    if p.x_range[0] < 0.0 || p.z_range[0] < 0.0 {
        return Err(Error::InvalidGame("powers must be nonnegative".into()));
    }
    if p.theta_set.is_empty() {
        return Err(Error::InvalidGame("wireless deception set is empty".into()));
    }
    let model = Wireless {
        h_rd0: p.h_rd0,
        c: p.h_ed * p.h_ed,
        eta_noise: p.eta_noise,
        d1: p.d1,
        d3: p.d3,
        d4: p.d4,
        d2: p.d2.clone(),
    };
    let mut thetas = p.theta_set.clone();
    thetas.push(p.h_rd0);
    let (mu, kappa) = estimate_constants(&model, p, &thetas)?;
    GameDefinition::builder("wireless", Arc::new(model))
        .x_box(p.x_range[0], p.x_range[1])
        .y_box(p.y_range[0], p.y_range[1])
        .z_box(StrategyBox::uniform(p.n, p.z_range[0], p.z_range[1])?)
        .theta_set(p.theta_set.iter().map(|t| vec![*t]).collect())
        .theta_true(vec![p.h_rd0])
        .monotonicity(mu, kappa.max(mu))
        .symmetric_jacobian(true)
        .build()
}
