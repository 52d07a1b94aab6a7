//! Three-party game data model: leader `X`, insider `Y`, and `N` attackers `Z`.
//!
//! The leader always evaluates its utility under the true parameter `theta0`;
//! the insider and the attackers see the announced (possibly manipulated)
//! parameter `theta`. Utilities are supplied through the [`GameModel`] trait so
//! that closed-form scenarios can provide analytic gradients.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A deception parameter (an `m`-vector).
pub type Theta = Vec<f64>;

const BOX_SLACK: f64 = 1e-12;

/// Axis-aligned box `[lo, hi]` (per coordinate).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl StrategyBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidGame(format!(
                "box bounds must be nonempty and of equal length (got {} and {})",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite()) || l > h {
                return Err(Error::InvalidGame(format!(
                    "coordinate {i}: lower bound {l} exceeds upper bound {h}"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    /// `n` copies of the same interval.
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *v >= l - BOX_SLACK && *v <= h + BOX_SLACK)
    }

    pub fn project(&self, p: &mut [f64]) {
        for (v, (l, h)) in p.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*l, *h);
        }
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| if h > l { rng.gen_range(*l..=*h) } else { *l })
            .collect()
    }
}

/// Closed-form utilities and derivatives of a three-party game.
///
/// `z` always has length `n_attackers()`. Every method must be a pure function
/// of its arguments.
pub trait GameModel: Send + Sync {
    fn n_attackers(&self) -> usize;

    /// `U_X(x, y, z, theta0)`.
    fn leader_utility(&self, x: f64, y: f64, z: &[f64], theta0: &[f64]) -> f64;

    /// `dU_X/dx`.
    fn leader_grad_x(&self, x: f64, y: f64, z: &[f64], theta0: &[f64]) -> f64;

    /// `dU_X/dz` written into `out`.
    fn leader_grad_z(&self, x: f64, y: f64, z: &[f64], theta0: &[f64], out: &mut [f64]);

    /// `f2(x, theta)`: the slope of the insider utility in `y`.
    fn insider_slope(&self, x: f64, theta: &[f64]) -> f64;

    /// `f3(x)`: the intercept of the insider utility.
    fn insider_intercept(&self, x: f64) -> f64;

    /// `U_{Z_i}(x, y, z, theta)`.
    fn attacker_utility(&self, i: usize, x: f64, y: f64, z: &[f64], theta: &[f64]) -> f64;

    /// Pseudogradient `F = col{-dU_{Z_i}/dz_i}`.
    fn pseudogradient(&self, x: f64, y: f64, z: &[f64], theta: &[f64], out: &mut [f64]);

    /// `J_1 F = dF/dx` (an `N`-vector).
    fn pseudogradient_jac_x(&self, x: f64, y: f64, z: &[f64], theta: &[f64], out: &mut [f64]);

    /// `J_3 F = dF/dz` (`N x N`).
    fn pseudogradient_jac_z(&self, x: f64, y: f64, z: &[f64], theta: &[f64]) -> DMatrix<f64>;

    /// `J_3 F v`. Override when the dense Jacobian is expensive to form.
    fn pseudogradient_jac_z_mul(
        &self,
        x: f64,
        y: f64,
        z: &[f64],
        theta: &[f64],
        v: &[f64],
        out: &mut [f64],
    ) {
        let jac = self.pseudogradient_jac_z(x, y, z, theta);
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..v.len()).map(|j| jac[(i, j)] * v[j]).sum();
        }
    }
}

/// Leader utility of the form `B(x, theta0) + f1(y, z) x`.
#[derive(Clone)]
pub struct TemplateLeaderUtility {
    base: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>,
    base_grad: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>,
    interaction: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>,
    interaction_grad_z: Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>,
}

impl TemplateLeaderUtility {
    pub fn new(
        base: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        base_grad: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        interaction: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        interaction_grad_z: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            base: Arc::new(base),
            base_grad: Arc::new(base_grad),
            interaction: Arc::new(interaction),
            interaction_grad_z: Arc::new(interaction_grad_z),
        }
    }

    pub fn base(&self, x: f64, theta0: &[f64]) -> f64 {
        (self.base)(x, theta0)
    }

    pub fn interaction(&self, y: f64, z: &[f64]) -> f64 {
        (self.interaction)(y, z)
    }

    pub fn value(&self, x: f64, y: f64, z: &[f64], theta0: &[f64]) -> f64 {
        self.base(x, theta0) + self.interaction(y, z) * x
    }

    pub fn grad_x(&self, x: f64, y: f64, z: &[f64], theta0: &[f64]) -> f64 {
        (self.base_grad)(x, theta0) + self.interaction(y, z)
    }

    /// `x * grad_z f1(y, z)`.
    pub fn grad_z(&self, x: f64, y: f64, z: &[f64], out: &mut [f64]) {
        (self.interaction_grad_z)(y, z, out);
        for o in out.iter_mut() {
            *o *= x;
        }
    }
}

impl fmt::Debug for TemplateLeaderUtility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("TemplateLeaderUtility")
    }
}

/// An immutable game instance.
#[derive(Clone)]
pub struct GameDefinition {
    name: String,
    x_box: StrategyBox,
    y_box: StrategyBox,
    z_box: StrategyBox,
    theta_set: Vec<Theta>,
    theta_true: Theta,
    mu: f64,
    kappa: f64,
    symmetric_jacobian: bool,
    model: Arc<dyn GameModel>,
}

impl fmt::Debug for GameDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameDefinition")
            .field("name", &self.name)
            .field("x_box", &self.x_box)
            .field("y_box", &self.y_box)
            .field("z_box", &self.z_box)
            .field("theta_set", &self.theta_set)
            .field("theta_true", &self.theta_true)
            .field("mu", &self.mu)
            .field("kappa", &self.kappa)
            .finish()
    }
}

pub struct GameBuilder {
    name: String,
    model: Arc<dyn GameModel>,
    x_box: Option<StrategyBox>,
    y_box: Option<StrategyBox>,
    z_box: Option<StrategyBox>,
    theta_set: Vec<Theta>,
    theta_true: Theta,
    mu: f64,
    kappa: f64,
    symmetric_jacobian: bool,
}

impl GameBuilder {
    pub fn x_box(mut self, lo: f64, hi: f64) -> Self {
        self.x_box = StrategyBox::interval(lo, hi).ok();
        self
    }

    pub fn y_box(mut self, lo: f64, hi: f64) -> Self {
        self.y_box = StrategyBox::interval(lo, hi).ok();
        self
    }

    pub fn z_box(mut self, z_box: StrategyBox) -> Self {
        self.z_box = Some(z_box);
        self
    }

    pub fn theta_set(mut self, theta_set: Vec<Theta>) -> Self {
        self.theta_set = theta_set;
        self
    }

    pub fn theta_true(mut self, theta_true: Theta) -> Self {
        self.theta_true = theta_true;
        self
    }

    pub fn monotonicity(mut self, mu: f64, kappa: f64) -> Self {
        self.mu = mu;
        self.kappa = kappa;
        self
    }

    pub fn symmetric_jacobian(mut self, symmetric: bool) -> Self {
        self.symmetric_jacobian = symmetric;
        self
    }

    pub fn build(self) -> Result<GameDefinition> {
        let missing = |what: &str| Error::InvalidGame(format!("{what} box missing or invalid"));
        let x_box = self.x_box.ok_or_else(|| missing("leader"))?;
        let y_box = self.y_box.ok_or_else(|| missing("insider"))?;
        let z_box = self.z_box.ok_or_else(|| missing("attacker"))?;
        let n = self.model.n_attackers();
        if n == 0 {
            return Err(Error::InvalidGame("at least one attacker is required".into()));
        }
        if z_box.dim() != n {
            return Err(Error::InvalidGame(format!(
                "attacker box has dimension {} but the model has {n} attackers",
                z_box.dim()
            )));
        }
        if self.theta_set.is_empty() {
            return Err(Error::InvalidGame("deception set is empty".into()));
        }
        let m = self.theta_true.len();
        if self.theta_set.iter().any(|t| t.len() != m) {
            return Err(Error::InvalidGame(
                "all deception parameters must have the dimension of theta0".into(),
            ));
        }
        if !(self.mu > 0.0 && self.kappa.is_finite() && self.mu <= self.kappa) {
            return Err(Error::InvalidGame(format!(
                "need 0 < mu <= kappa, got mu = {}, kappa = {}",
                self.mu, self.kappa
            )));
        }
        Ok(GameDefinition {
            name: self.name,
            x_box,
            y_box,
            z_box,
            theta_set: self.theta_set,
            theta_true: self.theta_true,
            mu: self.mu,
            kappa: self.kappa,
            symmetric_jacobian: self.symmetric_jacobian,
            model: self.model,
        })
    }
}

impl GameDefinition {
    pub fn builder(name: impl Into<String>, model: Arc<dyn GameModel>) -> GameBuilder {
        GameBuilder {
            name: name.into(),
            model,
            x_box: None,
            y_box: None,
            z_box: None,
            theta_set: Vec::new(),
            theta_true: Vec::new(),
            mu: 0.0,
            kappa: 0.0,
            symmetric_jacobian: false,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn model(&self) -> &dyn GameModel {
        self.model.as_ref()
    }

    pub fn n_attackers(&self) -> usize {
        self.z_box.dim()
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.x_box.lo()[0], self.x_box.hi()[0])
    }

    pub fn y_range(&self) -> (f64, f64) {
        (self.y_box.lo()[0], self.y_box.hi()[0])
    }

    pub fn x_box(&self) -> &StrategyBox {
        &self.x_box
    }

    pub fn y_box(&self) -> &StrategyBox {
        &self.y_box
    }

    pub fn z_box(&self) -> &StrategyBox {
        &self.z_box
    }

    pub fn theta_set(&self) -> &[Theta] {
        &self.theta_set
    }

    pub fn theta_true(&self) -> &[f64] {
        &self.theta_true
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn symmetric_jacobian(&self) -> bool {
        self.symmetric_jacobian
    }

    /// Same game with a different deception set.
    pub fn with_theta_set(&self, theta_set: Vec<Theta>) -> Result<Self> {
        if theta_set.is_empty() {
            return Err(Error::InvalidGame("deception set is empty".into()));
        }
        if theta_set.iter().any(|t| t.len() != self.theta_true.len()) {
            return Err(Error::InvalidGame(
                "all deception parameters must have the dimension of theta0".into(),
            ));
        }
        let mut game = self.clone();
        game.theta_set = theta_set;
        Ok(game)
    }

    fn check_point(&self, x: f64, y: f64, z: &[f64]) -> Result<()> {
        if !self.x_box.contains(&[x]) {
            return Err(Error::Domain(format!("x = {x} outside {:?}", self.x_range())));
        }
        if !self.y_box.contains(&[y]) {
            return Err(Error::Domain(format!("y = {y} outside {:?}", self.y_range())));
        }
        if !self.z_box.contains(z) {
            return Err(Error::Domain(format!("z = {z:?} outside the attacker box")));
        }
        Ok(())
    }

    /// Leader utility under the true parameter.
    pub fn evaluate_leader_utility(&self, x: f64, y: f64, z: &[f64]) -> Result<f64> {
        self.check_point(x, y, z)?;
        Ok(self.leader_utility(x, y, z))
    }

    /// Pseudogradient of the attacker game under the perceived parameter.
    pub fn evaluate_pseudogradient(&self, x: f64, y: f64, z: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x, y, z)?;
        let mut out = vec![0.0; self.n_attackers()];
        self.model.pseudogradient(x, y, z, theta, &mut out);
        Ok(out)
    }

    pub(crate) fn leader_utility(&self, x: f64, y: f64, z: &[f64]) -> f64 {
        self.model.leader_utility(x, y, z, &self.theta_true)
    }

    pub(crate) fn leader_grad_x(&self, x: f64, y: f64, z: &[f64]) -> f64 {
        self.model.leader_grad_x(x, y, z, &self.theta_true)
    }

    pub(crate) fn leader_grad_z(&self, x: f64, y: f64, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; z.len()];
        self.model.leader_grad_z(x, y, z, &self.theta_true, &mut out);
        out
    }

    pub fn insider_slope(&self, x: f64, theta: &[f64]) -> f64 {
        self.model.insider_slope(x, theta)
    }

    /// `f2(x, theta) y + f3(x)`.
    pub fn insider_utility(&self, x: f64, y: f64, theta: &[f64]) -> f64 {
        self.model.insider_slope(x, theta) * y + self.model.insider_intercept(x)
    }

    pub fn attacker_utility(&self, i: usize, x: f64, y: f64, z: &[f64], theta: &[f64]) -> f64 {
        self.model.attacker_utility(i, x, y, z, theta)
    }
}

/// A point at which gradients are compared.
#[derive(Clone, Debug, PartialEq)]
pub struct GamePoint {
    pub x: f64,
    pub y: f64,
    pub z: Vec<f64>,
    pub theta: Theta,
}

/// Leader gradients and pseudogradient derivatives at one point.
#[derive(Clone, Debug)]
pub struct GradientBundle {
    pub leader_grad_x: f64,
    pub leader_grad_z: Vec<f64>,
    pub pseudogradient: Vec<f64>,
    pub jac_x: Vec<f64>,
    pub jac_z: DMatrix<f64>,
}

impl GradientBundle {
    /// The analytic derivatives supplied by the model.
    pub fn analytic(game: &GameDefinition, p: &GamePoint) -> Self {
        let n = game.n_attackers();
        let model = game.model();
        let mut pseudogradient = vec![0.0; n];
        model.pseudogradient(p.x, p.y, &p.z, &p.theta, &mut pseudogradient);
        let mut jac_x = vec![0.0; n];
        model.pseudogradient_jac_x(p.x, p.y, &p.z, &p.theta, &mut jac_x);
        Self {
            leader_grad_x: game.leader_grad_x(p.x, p.y, &p.z),
            leader_grad_z: game.leader_grad_z(p.x, p.y, &p.z),
            pseudogradient,
            jac_x,
            jac_z: model.pseudogradient_jac_z(p.x, p.y, &p.z, &p.theta),
        }
    }

    /// Largest entry-wise discrepancy, relative to `max(1, |analytic|)`.
    pub fn max_relative_error(&self, other: &GradientBundle) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(1.0);
        let mut worst = rel(self.leader_grad_x, other.leader_grad_x);
        let pairs = self
            .leader_grad_z
            .iter()
            .zip(&other.leader_grad_z)
            .chain(self.pseudogradient.iter().zip(&other.pseudogradient))
            .chain(self.jac_x.iter().zip(&other.jac_x))
            .chain(self.jac_z.iter().zip(other.jac_z.iter()));
        for (a, b) in pairs {
            worst = worst.max(rel(*a, *b));
        }
        worst
    }
}

/// Step pair `(minus, plus)` for a difference along one coordinate, falling
/// back to a one-sided difference at the box faces.
fn fd_offsets(v: f64, lo: f64, hi: f64, h: f64) -> (f64, f64) {
    let minus = if v - h >= lo { h } else { 0.0 };
    let plus = if v + h <= hi { h } else { 0.0 };
    (minus, plus)
}

fn fd<F: FnMut(f64) -> f64>(mut f: F, v: f64, lo: f64, hi: f64, h: f64) -> f64 {
    let (m, p) = fd_offsets(v, lo, hi, h);
    if m + p == 0.0 {
        return 0.0;
    }
    (f(v + p) - f(v - m)) / (m + p)
}

/// Central-difference estimates of every derivative the solver uses. The
/// pseudogradient is differenced from the attacker utilities themselves, its
/// Jacobians from the analytic pseudogradient.
pub fn finite_difference_gradients(game: &GameDefinition, p: &GamePoint, h: f64) -> GradientBundle {
    let n = game.n_attackers();
    let model = game.model();
    let (xl, xh) = game.x_range();
    let zlo = game.z_box().lo();
    let zhi = game.z_box().hi();

    let leader_grad_x = fd(|x| game.leader_utility(x, p.y, &p.z), p.x, xl, xh, h);

    let mut z = p.z.clone();
    let mut leader_grad_z = vec![0.0; n];
    let mut pseudogradient = vec![0.0; n];
    for i in 0..n {
        leader_grad_z[i] = fd(
            |v| {
                z[i] = v;
                game.leader_utility(p.x, p.y, &z)
            },
            p.z[i],
            zlo[i],
            zhi[i],
            h,
        );
        z[i] = p.z[i];
        pseudogradient[i] = -fd(
            |v| {
                z[i] = v;
                model.attacker_utility(i, p.x, p.y, &z, &p.theta)
            },
            p.z[i],
            zlo[i],
            zhi[i],
            h,
        );
        z[i] = p.z[i];
    }

    let mut buf = vec![0.0; n];
    let (m, pl) = fd_offsets(p.x, xl, xh, h);
    let mut jac_x = vec![0.0; n];
    if m + pl > 0.0 {
        model.pseudogradient(p.x + pl, p.y, &p.z, &p.theta, &mut buf);
        jac_x.copy_from_slice(&buf);
        model.pseudogradient(p.x - m, p.y, &p.z, &p.theta, &mut buf);
        for (j, b) in jac_x.iter_mut().zip(&buf) {
            *j = (*j - b) / (m + pl);
        }
    }

    let mut jac_z = DMatrix::zeros(n, n);
    let mut up = vec![0.0; n];
    for j in 0..n {
        let (m, pl) = fd_offsets(p.z[j], zlo[j], zhi[j], h);
        if m + pl == 0.0 {
            continue;
        }
        z[j] = p.z[j] + pl;
        model.pseudogradient(p.x, p.y, &z, &p.theta, &mut up);
        z[j] = p.z[j] - m;
        model.pseudogradient(p.x, p.y, &z, &p.theta, &mut buf);
        z[j] = p.z[j];
        for i in 0..n {
            jac_z[(i, j)] = (up[i] - buf[i]) / (m + pl);
        }
    }

    GradientBundle {
        leader_grad_x,
        leader_grad_z,
        pseudogradient,
        jac_x,
        jac_z,
    }
}

/// Sampled bounds on `<F(z)-F(z'), z-z'> / |z-z'|^2` and `|F(z)-F(z')| / |z-z'|`
/// over random pairs in the attacker box, at random `(x, y)` and each `theta`.
#[derive(Clone, Copy, Debug)]
pub struct MonotonicitySample {
    pub min_monotonicity: f64,
    pub max_lipschitz: f64,
}

pub fn sample_monotonicity<R: Rng>(
    game: &GameDefinition,
    thetas: &[Theta],
    pairs: usize,
    rng: &mut R,
) -> MonotonicitySample {
    let n = game.n_attackers();
    let mut fa = vec![0.0; n];
    let mut fb = vec![0.0; n];
    let mut min_mono = f64::INFINITY;
    let mut max_lip: f64 = 0.0;
    for k in 0..pairs {
        let theta = &thetas[k % thetas.len()];
        let x = game.x_box().sample(rng)[0];
        let y = game.y_box().sample(rng)[0];
        let za = game.z_box().sample(rng);
        let zb = game.z_box().sample(rng);
        game.model().pseudogradient(x, y, &za, theta, &mut fa);
        game.model().pseudogradient(x, y, &zb, theta, &mut fb);
        let dz2: f64 = za.iter().zip(&zb).map(|(a, b)| (a - b) * (a - b)).sum();
        if dz2 < 1e-24 {
            continue;
        }
        let inner: f64 = (0..n).map(|i| (fa[i] - fb[i]) * (za[i] - zb[i])).sum();
        let df2: f64 = (0..n).map(|i| (fa[i] - fb[i]).powi(2)).sum();
        min_mono = min_mono.min(inner / dz2);
        max_lip = max_lip.max((df2 / dz2).sqrt());
    }
    MonotonicitySample {
        min_monotonicity: min_mono,
        max_lipschitz: max_lip,
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}
