//! Insider-assisted false data injection on a microgrid.
//!
//! Leader `x` is the defense budget, the insider `y` the leaked access level,
//! attacker `z_i` the injection magnitude on bus `i`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameDefinition, GameModel, StrategyBox};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicrogridParams {
    pub n: usize,
    /// Constant offset of the leader utility.
    pub l: f64,
    pub lambda_loss: f64,
    pub alpha_amp: f64,
    pub v_base: f64,
    /// True betrayal-cost coefficient (`theta0`).
    pub beta: f64,
    pub delta_cost: f64,
    /// Off-diagonal coupling; `None` means `g_ij = coupling` for all `i != j`.
    pub g: Option<Vec<Vec<f64>>>,
    pub coupling: f64,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub z_range: [f64; 2],
    pub theta_set: Vec<f64>,
}

impl Default for MicrogridParams {
    fn default() -> Self {
        Self {
            n: 3,
            l: 20.0,
            lambda_loss: 1.5,
            alpha_amp: 0.5,
            v_base: 3.0,
            beta: 1.0,
            delta_cost: 0.8,
            g: None,
            coupling: 0.2,
            x_range: [0.0, 5.0],
            y_range: [0.0, 1.0],
            z_range: [0.0, 5.0],
            theta_set: vec![0.8, 1.0, 1.2],
        }
    }
}

impl MicrogridParams {
    pub fn coupling_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.n;
        match &self.g {
            None => Ok(DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { self.coupling })),
            Some(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidGame(format!("coupling matrix must be {n}x{n}")));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rows[i][j] }))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Microgrid {
    l: f64,
    lambda: f64,
    alpha: f64,
    v_base: f64,
    delta: f64,
    g: DMatrix<f64>,
    // row-major copy; coupling sums read contiguous memory
    g_rows: Vec<f64>,
}

impl Microgrid {
    fn b(&self, y: f64) -> f64 {
        1.0 + self.alpha * y
    }

    fn c(&self, x: f64) -> f64 {
        1.0 + self.delta * x
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.g
    }

    fn coupled(&self, i: usize, z: &[f64]) -> f64 {
        let n = z.len();
        self.g_rows[i * n..(i + 1) * n].iter().zip(z).map(|(g, z)| g * z).sum()
    }
}

impl GameModel for Microgrid {
    fn n_attackers(&self) -> usize {
        self.g.nrows()
    }

    fn leader_utility(&self, x: f64, y: f64, z: &[f64], _theta0: &[f64]) -> f64 {
        self.l - x - self.lambda * self.b(y) * z.iter().sum::<f64>()
    }

    fn leader_grad_x(&self, _x: f64, _y: f64, _z: &[f64], _theta0: &[f64]) -> f64 {
        -1.0
    }

    fn leader_grad_z(&self, _x: f64, y: f64, _z: &[f64], _theta0: &[f64], out: &mut [f64]) {
        let v = -self.lambda * self.b(y);
        out.iter_mut().for_each(|o| *o = v);
    }

    fn insider_slope(&self, x: f64, theta: &[f64]) -> f64 {
        self.v_base - theta[0] * x
    }

    fn insider_intercept(&self, x: f64) -> f64 {
        x
    }

    fn attacker_utility(&self, i: usize, x: f64, y: f64, z: &[f64], _theta: &[f64]) -> f64 {
        self.b(y) * z[i] - 0.5 * self.c(x) * z[i] * z[i] + z[i] * self.coupled(i, z)
    }

    fn pseudogradient(&self, x: f64, y: f64, z: &[f64], _theta: &[f64], out: &mut [f64]) {
        let (b, c) = (self.b(y), self.c(x));
        for (i, o) in out.iter_mut().enumerate() {
            *o = -b + c * z[i] - self.coupled(i, z);
        }
    }

    fn pseudogradient_jac_x(&self, _x: f64, _y: f64, z: &[f64], _theta: &[f64], out: &mut [f64]) {
        for (o, zi) in out.iter_mut().zip(z) {
            *o = self.delta * zi;
        }
    }

    fn pseudogradient_jac_z(&self, x: f64, _y: f64, _z: &[f64], _theta: &[f64]) -> DMatrix<f64> {
        let n = self.g.nrows();
        DMatrix::identity(n, n) * self.c(x) - &self.g
    }

    fn pseudogradient_jac_z_mul(&self, x: f64, _y: f64, _z: &[f64], _theta: &[f64], v: &[f64], out: &mut [f64]) {
        let c = self.c(x);
        for (i, o) in out.iter_mut().enumerate() {
            *o = c * v[i] - self.coupled(i, v);
        }
    }
}

fn max_row_sum(g: &DMatrix<f64>) -> f64 {
    g.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn build_microgrid(params: &MicrogridParams) -> Result<GameDefinition> {
    let p = params;
    if p.n == 0 {
        return Err(Error::InvalidGame("microgrid needs at least one bus".into()));
    }
    if p.theta_set.is_empty() {
        return Err(Error::InvalidGame("microgrid deception set is empty".into()));
    }
    if p.x_range[0] < 0.0 || p.delta_cost < 0.0 {
        return Err(Error::InvalidGame("defense budget and cost slope must be nonnegative".into()));
    }
    let g = p.coupling_matrix()?;
    let norm_g = max_row_sum(&g);
    let c_min = 1.0 + p.delta_cost * p.x_range[0];
    let c_max = 1.0 + p.delta_cost * p.x_range[1];
    let mu = c_min - norm_g;
    if mu <= 0.0 {
        return Err(Error::InvalidGame(format!(
            "strong monotonicity fails: c(x_min) = {c_min} does not exceed the coupling row-sum bound {norm_g}"
        )));
    }
    let kappa = c_max + norm_g;
    let symmetric = (&g - g.transpose()).amax() <= 1e-14;
    let model = Microgrid {
        l: p.l,
        lambda: p.lambda_loss,
        alpha: p.alpha_amp,
        v_base: p.v_base,
        delta: p.delta_cost,
        g_rows: g.transpose().as_slice().to_vec(),
        g,
    };
    GameDefinition::builder("microgrid", Arc::new(model))
        .x_box(p.x_range[0], p.x_range[1])
        .y_box(p.y_range[0], p.y_range[1])
        .z_box(StrategyBox::uniform(p.n, p.z_range[0], p.z_range[1])?)
        .theta_set(p.theta_set.iter().map(|t| vec![*t]).collect())
        .theta_true(vec![p.beta])
        .monotonicity(mu, kappa)
        .symmetric_jacobian(symmetric)
        .build()
}

/// Default microgrid with a random symmetric coupling matrix. Entries are drawn
/// from `[0, coupling_scale]` and the matrix is rescaled so its row sums stay at
/// most half of `c(x_min)`.
pub fn build_random_microgrid(n: usize, seed: u64, coupling_scale: f64) -> Result<GameDefinition> {
    if n < 2 {
        return Err(Error::InvalidGame("random microgrid needs n >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = if coupling_scale > 0.0 {
                rng.gen_range(0.0..=coupling_scale)
            } else {
                0.0
            };
            g[i][j] = v;
            g[j][i] = v;
        }
    }
    let base = MicrogridParams::default();
    let limit = 0.5 * (1.0 + base.delta_cost * base.x_range[0]);
    let worst = g.iter().map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max);
    if worst > limit {
        let scale = limit / worst;
        g.iter_mut().flatten().for_each(|v| *v *= scale);
    }
    build_microgrid(&MicrogridParams {
        n,
        g: Some(g),
        ..base
    })
}
