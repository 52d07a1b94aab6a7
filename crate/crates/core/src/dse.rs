//! Two-loop hypergradient solver for deception Stackelberg equilibria.
//!
//! For each announced parameter the leader domain is split at the zeros of
//! `f2`. On every sign interval the insider response is constant, and the
//! leader runs projected ascent along the hypergradient, with the attacker
//! equilibrium and its sensitivity tracked by [`inner_loop`]. Zeros (or gap
//! brackets around them) are scored by the pessimistic or optimistic
//! zero-point utility. The best candidate over all parameters wins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameDefinition, Theta};
use crate::lower::{solve_nash, ContractionParams};
use crate::middle::{
    br_insider, golden_min, partition_leader_domain, BrResult, PartitionResult, SignedInterval, ZeroPoint,
    DEFAULT_GRID_M, DEFAULT_ZERO_WIDTH,
};
use crate::sensitivity::inner_loop;

/// Tolerance of the attacker equilibrium behind every reported utility.
pub const FINAL_NASH_TOL: f64 = 1e-12;

const RESCORED_ITERATES: usize = 5;

/// Tie-break of set-valued insider responses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Pessimistic: the leader assumes the worst insider response.
    Weak,
    /// Optimistic: the leader assumes the best insider response.
    Strong,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub mode: TieBreak,
    pub alpha0: f64,
    pub alpha_exponent: f64,
    pub sigma_c: f64,
    pub sigma_exponent: f64,
    pub max_outer: usize,
    /// Starting points as fractions of each interval (0 = left end).
    pub x_inits: Vec<f64>,
    pub x_tol: f64,
    /// Consecutive steps below `x_tol` needed to stop.
    pub x_tol_window: usize,
    pub grid_m: usize,
    pub zero_width: f64,
    pub y_grid: usize,
    /// Grid over a gap bracket for the pessimistic surrogate.
    pub gap_x_grid: usize,
    /// Target suboptimality; 0 requests an exact equilibrium.
    pub epsilon: f64,
    /// Explicit brackets around zeros of `f2`, used in epsilon mode.
    pub gaps: Option<Vec<[f64; 2]>>,
    /// Insider-unaware baseline: `y` held at this value everywhere.
    pub freeze_y: Option<f64>,
    /// Utilities closer than this are treated as tied.
    pub tie_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mode: TieBreak::Weak,
            alpha0: 1.0,
            alpha_exponent: 0.6,
            sigma_c: 1.0,
            sigma_exponent: 1.1,
            max_outer: 20_000,
            x_inits: vec![0.0, 0.5, 1.0],
            x_tol: 1e-7,
            x_tol_window: 50,
            grid_m: DEFAULT_GRID_M,
            zero_width: DEFAULT_ZERO_WIDTH,
            y_grid: 256,
            gap_x_grid: 64,
            epsilon: 0.0,
            gaps: None,
            freeze_y: None,
            tie_tol: 1e-6,
        }
    }
}

impl SolverConfig {
    /// Every violated constraint, one message each.
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let p = self.alpha_exponent;
        if !(p > 0.5 && p <= 1.0) {
            errs.push(format!(
                "alpha_exponent = {p}: the step sizes alpha0 / k^p must be nonsummable and square-summable, which needs p in (0.5, 1]"
            ));
        }
        if !(p + self.sigma_exponent > 1.0) {
            errs.push(format!(
                "alpha_exponent + sigma_exponent = {}: the products alpha^k sigma^k must be summable, which needs p + r > 1",
                p + self.sigma_exponent
            ));
        }
        if !(self.alpha0 > 0.0) {
            errs.push(format!("alpha0 = {} must be positive", self.alpha0));
        }
        if !(self.sigma_c > 0.0) {
            errs.push(format!("sigma_c = {} must be positive", self.sigma_c));
        }
        if !(self.sigma_exponent > 0.0) {
            errs.push(format!("sigma_exponent = {} must be positive", self.sigma_exponent));
        }
        if self.max_outer == 0 {
            errs.push("max_outer must be at least 1".into());
        }
        if self.x_inits.is_empty() || self.x_inits.iter().any(|f| !(0.0..=1.0).contains(f)) {
            errs.push("x_inits must be a nonempty list of fractions in [0, 1]".into());
        }
        if !(self.x_tol > 0.0) || self.x_tol_window == 0 {
            errs.push("x_tol must be positive and x_tol_window at least 1".into());
        }
        if self.grid_m < 2 {
            errs.push(format!("grid_m = {} must be at least 2", self.grid_m));
        }
        if !(self.zero_width > 0.0) {
            errs.push(format!("zero_width = {} must be positive", self.zero_width));
        }
        if self.y_grid < 2 || self.gap_x_grid < 2 {
            errs.push("y_grid and gap_x_grid must be at least 2".into());
        }
        if !(self.epsilon >= 0.0) {
            errs.push(format!("epsilon = {} must be nonnegative", self.epsilon));
        }
        if self.epsilon > 0.0 && self.mode == TieBreak::Strong {
            errs.push("epsilon > 0 is only defined for the weak tie-break".into());
        }
        if self.gaps.is_some() && self.epsilon <= 0.0 {
            errs.push("explicit gaps require epsilon > 0".into());
        }
        if !(self.tie_tol >= 0.0) {
            errs.push(format!("tie_tol = {} must be nonnegative", self.tie_tol));
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.validation_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }

    pub fn alpha(&self, k: usize) -> f64 {
        self.alpha0 / (k as f64).powf(self.alpha_exponent)
    }

    pub fn sigma(&self, k: usize) -> f64 {
        self.sigma_c / ((k as f64).powf(self.sigma_exponent) + 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumKind {
    Wdse,
    Sdse,
    EpsWdse,
    Hne,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "flag")]
pub enum Flag {
    /// The pessimistic supremum sits at a zero where the insider's worst
    /// response is strictly worse; no maximizer exists.
    SupremumNotAttained {
        theta_index: usize,
        x: f64,
        supremum: f64,
        attained: f64,
    },
    /// Outer iterations at which `sigma^k >= delta(x^k)`.
    RegionViolations {
        theta_index: usize,
        interval: usize,
        count: usize,
    },
    OuterCapReached { theta_index: usize, interval: usize },
    /// The winning point comes from a gap bracket.
    GapInterval { theta_index: usize, lo: f64, hi: f64 },
    /// The returned point was moved off a zero endpoint into the interval interior.
    EpsilonShift { theta_index: usize, from: f64, to: f64 },
    FrozenInsider { y: f64 },
    /// The direct HNE search failed and the oracle grid supplied the answer.
    HneOracleFallback,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub k: usize,
    pub x: f64,
    pub y: f64,
    pub z: Vec<f64>,
    pub s: Vec<f64>,
    pub hypergradient: f64,
    pub utility: f64,
    pub sigma: f64,
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum CandidateSource {
    Interval(usize),
    Zero(usize),
}

/// Best point found for one deception parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaSummary {
    pub theta: Theta,
    pub x: f64,
    pub y: f64,
    pub z: Vec<f64>,
    pub utility: f64,
    pub source: CandidateSource,
    pub attained: bool,
    pub partition: PartitionResult,
    pub trace: Vec<TracePoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub kind: EquilibriumKind,
    pub x_star: f64,
    pub y_star: f64,
    pub z_star: Vec<f64>,
    pub theta_star: Theta,
    pub theta_index: usize,
    pub utility: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TracePoint>,
    pub flags: Vec<Flag>,
    pub per_theta: Vec<ThetaSummary>,
}

/// `grad_1 U_X + s^T grad_3 U_X`.
pub fn hypergradient(game: &GameDefinition, x: f64, y: f64, z: &[f64], s: &[f64]) -> f64 {
    let gz = game.leader_grad_z(x, y, z);
    game.leader_grad_x(x, y, z) + s.iter().zip(&gz).map(|(a, b)| a * b).sum::<f64>()
}

/// Attacker equilibrium at `(x, y)` to [`FINAL_NASH_TOL`].
pub fn equilibrium_z(
    game: &GameDefinition,
    x: f64,
    y: f64,
    theta: &[f64],
    z0: &[f64],
    params: &ContractionParams,
) -> Result<Vec<f64>> {
    Ok(solve_nash(game, x, y, theta, z0, FINAL_NASH_TOL, params)?.z)
}

/// `U_X(x, y, phi2(x, y))`: the leader utility along one branch of the insider response.
pub fn branch_utility(
    game: &GameDefinition,
    x: f64,
    y: f64,
    theta: &[f64],
    z0: &[f64],
    params: &ContractionParams,
) -> Result<(Vec<f64>, f64)> {
    let z = equilibrium_z(game, x, y, theta, z0, params)?;
    let u = game.leader_utility(x, y, &z);
    Ok((z, u))
}

/// Outcome of projected ascent on one interval.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalAscent {
    pub x: f64,
    pub y: f64,
    pub z: Vec<f64>,
    pub utility: f64,
    pub trace: Vec<TracePoint>,
    pub converged: bool,
    pub region_violations: usize,
}

fn better(u: f64, x: f64, best_u: f64, best_x: f64, tie_tol: f64) -> bool {
    u > best_u + tie_tol || ((u - best_u).abs() <= tie_tol && x < best_x)
}

/// Projected hypergradient ascent on one sign interval, multi-started from
/// `config.x_inits`. The best start is kept.
pub fn ascend_interval(
    game: &GameDefinition,
    theta: &[f64],
    interval: &SignedInterval,
    config: &SolverConfig,
    params: &ContractionParams,
) -> Result<IntervalAscent> {
    let y = config.freeze_y.unwrap_or_else(|| interval.sign.insider_response(game));
    let mut best: Option<IntervalAscent> = None;
    for frac in &config.x_inits {
        let x0 = interval.lo + frac * (interval.hi - interval.lo);
        let run = ascend_from(game, theta, interval, y, x0, config, params)?;
        let replace = match &best {
            None => true,
            Some(b) => better(run.utility, run.x, b.utility, b.x, 1e-12),
        };
        if replace {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one start"))
}

fn ascend_from(
    game: &GameDefinition,
    theta: &[f64],
    interval: &SignedInterval,
    y: f64,
    x0: f64,
    config: &SolverConfig,
    params: &ContractionParams,
) -> Result<IntervalAscent> {
    let n = game.n_attackers();
    let mut x = x0;
    let mut z = game.z_box().midpoint();
    let mut s = vec![0.0; n];
    let mut trace = Vec::new();
    let mut still = 0;
    let mut violations = 0;
    let mut converged = false;
    for k in 1..=config.max_outer {
        let sigma = config.sigma(k);
        let alpha = config.alpha(k);
        let out = inner_loop(game, x, y, theta, &z, &s, sigma, params)?;
        z = out.z;
        s = out.s;
        if out.region_violation {
            violations += 1;
        }
        let hg = hypergradient(game, x, y, &z, &s);
        trace.push(TracePoint {
            k,
            x,
            y,
            z: z.clone(),
            s: s.clone(),
            hypergradient: hg,
            utility: game.leader_utility(x, y, &z),
            sigma,
            alpha,
        });
        let next = (x + alpha * hg).clamp(interval.lo, interval.hi);
        let step = (next - x).abs();
        x = next;
        if step <= config.x_tol {
            still += 1;
            if still >= config.x_tol_window {
                converged = true;
                break;
            }
        } else {
            still = 0;
        }
    }
    // On a kink the iterates keep oscillating; the best of the top trace
    // points and the last iterate is re-scored with a tight Nash solve.
    let mut order: Vec<usize> = (0..trace.len()).collect();
    order.sort_by(|a, b| trace[*b].utility.total_cmp(&trace[*a].utility).then(a.cmp(b)));
    let (mut z_best, mut u_best) = branch_utility(game, x, y, theta, &z, params)?;
    let mut x_best = x;
    for &i in order.iter().take(RESCORED_ITERATES) {
        let t = &trace[i];
        let (zt, ut) = branch_utility(game, t.x, y, theta, &t.z, params)?;
        if ut > u_best {
            x_best = t.x;
            z_best = zt;
            u_best = ut;
        }
    }
    Ok(IntervalAscent {
        x: x_best,
        y,
        z: z_best,
        utility: u_best,
        trace,
        converged,
        region_violations: violations,
    })
}

/// A scored zero point.
#[derive(Clone, Debug, PartialEq)]
pub struct ZeroEvaluation {
    pub x: f64,
    pub y: f64,
    pub z: Vec<f64>,
    pub value: f64,
}

/// Extremum of `y -> U_X(x, y, phi2(x, y))` over the insider box: minimum
/// under the weak tie-break, maximum under the strong one. A uniform grid of
/// `y_grid + 1` points is refined by golden section around the best cell.
pub fn insider_extremum(
    game: &GameDefinition,
    x: f64,
    theta: &[f64],
    mode: TieBreak,
    y_grid: usize,
    params: &ContractionParams,
) -> Result<ZeroEvaluation> {
    let (lo, hi) = game.y_range();
    let sgn = match mode {
        TieBreak::Weak => 1.0,
        TieBreak::Strong => -1.0,
    };
    let mut z = game.z_box().midpoint();
    let m = y_grid.max(1);
    let mut best = (0usize, f64::INFINITY, z.clone());
    for k in 0..=m {
        let y = lo + (hi - lo) * k as f64 / m as f64;
        let (zk, u) = branch_utility(game, x, y, theta, &z, params)?;
        if sgn * u < best.1 {
            best = (k, sgn * u, zk.clone());
        }
        z = zk;
    }
    let (k, mut score, mut zb) = best;
    let mut yb = lo + (hi - lo) * k as f64 / m as f64;
    if hi > lo {
        let a = lo + (hi - lo) * k.saturating_sub(1) as f64 / m as f64;
        let b = lo + (hi - lo) * (k + 1).min(m) as f64 / m as f64;
        let warm = zb.clone();
        let (yr, _) = golden_min(
            |y| branch_utility(game, x, y, theta, &warm, params).map(|(_, u)| sgn * u).unwrap_or(f64::INFINITY),
            a,
            b,
        );
        let (zr, ur) = branch_utility(game, x, yr, theta, &warm, params)?;
        if sgn * ur < score {
            score = sgn * ur;
            yb = yr;
            zb = zr;
        }
    }
    Ok(ZeroEvaluation {
        x,
        y: yb,
        z: zb,
        value: sgn * score,
    })
}

/// Zero-point utility `g`: the tie-broken leader utility at a zero of `f2`.
/// For a gap bracket the pessimistic surrogate also minimizes over an x-grid
/// on the bracket.
pub fn zero_point_utility(
    game: &GameDefinition,
    zero: &ZeroPoint,
    theta: &[f64],
    config: &SolverConfig,
    params: &ContractionParams,
) -> Result<ZeroEvaluation> {
    if let Some(y) = config.freeze_y {
        let x = zero.bounds().0;
        let (z, value) = branch_utility(game, x, y, theta, &game.z_box().midpoint(), params)?;
        return Ok(ZeroEvaluation { x, y, z, value });
    }
    match *zero {
        ZeroPoint::Resolved { x } => insider_extremum(game, x, theta, config.mode, config.y_grid, params),
        ZeroPoint::Gap { lo, hi } => {
            let m = config.gap_x_grid;
            let mut worst: Option<ZeroEvaluation> = None;
            for k in 0..=m {
                let x = lo + (hi - lo) * k as f64 / m as f64;
                let e = insider_extremum(game, x, theta, TieBreak::Weak, config.y_grid, params)?;
                if worst.as_ref().is_none_or(|w| e.value < w.value) {
                    worst = Some(e);
                }
            }
            Ok(worst.expect("nonempty grid"))
        }
    }
}

/// Leader utility at `x` with the insider's actual (tie-broken) response.
pub fn hierarchical_utility(
    game: &GameDefinition,
    x: f64,
    theta: &[f64],
    mode: TieBreak,
    tol_zero: f64,
    y_grid: usize,
    params: &ContractionParams,
) -> Result<ZeroEvaluation> {
    match br_insider(game, x, theta, tol_zero) {
        BrResult::Point(y) => {
            let (z, value) = branch_utility(game, x, y, theta, &game.z_box().midpoint(), params)?;
            Ok(ZeroEvaluation { x, y, z, value })
        }
        BrResult::Interval(..) => insider_extremum(game, x, theta, mode, y_grid, params),
    }
}

struct ThetaOutcome {
    summary: ThetaSummary,
    flags: Vec<Flag>,
    converged: bool,
}

fn solve_theta(
    game: &GameDefinition,
    index: usize,
    theta: &[f64],
    config: &SolverConfig,
    params: &ContractionParams,
) -> Result<ThetaOutcome> {
    let partition = match (&config.gaps, config.epsilon > 0.0) {
        (Some(gaps), true) => {
            let gaps: Vec<(f64, f64)> = gaps.iter().map(|g| (g[0], g[1])).collect();
            PartitionResult::with_gaps(game, theta, &gaps)?
        }
        _ => partition_leader_domain(game, theta, config.grid_m, config.zero_width)?,
    };
    let mut flags = Vec::new();
    let mut converged = true;

    struct Candidate {
        x: f64,
        y: f64,
        z: Vec<f64>,
        u: f64,
        source: CandidateSource,
        trace: Vec<TracePoint>,
    }
    let mut best: Option<Candidate> = None;
    let consider = |c: Candidate, best: &mut Option<Candidate>| {
        let replace = match best {
            None => true,
            Some(b) => better(c.u, c.x, b.u, b.x, 1e-12),
        };
        if replace {
            *best = Some(c);
        }
    };

    for (i, iv) in partition.intervals.iter().enumerate() {
        let asc = ascend_interval(game, theta, iv, config, params)?;
        if !asc.converged {
            converged = false;
            flags.push(Flag::OuterCapReached {
                theta_index: index,
                interval: i,
            });
        }
        if asc.region_violations > 0 {
            flags.push(Flag::RegionViolations {
                theta_index: index,
                interval: i,
                count: asc.region_violations,
            });
        }
        consider(
            Candidate {
                x: asc.x,
                y: asc.y,
                z: asc.z,
                u: asc.utility,
                source: CandidateSource::Interval(i),
                trace: asc.trace,
            },
            &mut best,
        );
    }
    for (j, zero) in partition.zeros.iter().enumerate() {
        let e = zero_point_utility(game, zero, theta, config, params)?;
        consider(
            Candidate {
                x: e.x,
                y: e.y,
                z: e.z,
                u: e.value,
                source: CandidateSource::Zero(j),
                trace: Vec::new(),
            },
            &mut best,
        );
    }
    let mut best = best.expect("partition has at least one interval");

    // the interval value at a zero endpoint is only a limit
    let mut attained = true;
    if config.freeze_y.is_none() && config.mode == TieBreak::Weak {
        if let CandidateSource::Interval(i) = best.source {
            let br = br_insider(game, best.x, theta, partition.tol_zero);
            if br.is_set_valued() {
                let actual = insider_extremum(game, best.x, theta, TieBreak::Weak, config.y_grid, params)?;
                if actual.value < best.u - 1e-9 {
                    if config.epsilon > 0.0 {
                        let iv = partition.intervals[i];
                        let from = best.x;
                        let (x, z, u) = shift_inward(game, theta, &iv, best.x, best.y, best.u, config, params)?;
                        flags.push(Flag::EpsilonShift {
                            theta_index: index,
                            from,
                            to: x,
                        });
                        best.x = x;
                        best.z = z;
                        best.u = u;
                    } else {
                        attained = false;
                        flags.push(Flag::SupremumNotAttained {
                            theta_index: index,
                            x: best.x,
                            supremum: best.u,
                            attained: actual.value,
                        });
                    }
                }
            }
        }
    }
    if let CandidateSource::Zero(j) = best.source {
        if let ZeroPoint::Gap { lo, hi } = partition.zeros[j] {
            flags.push(Flag::GapInterval {
                theta_index: index,
                lo,
                hi,
            });
        }
    }

    Ok(ThetaOutcome {
        summary: ThetaSummary {
            theta: theta.to_vec(),
            x: best.x,
            y: best.y,
            z: best.z,
            utility: best.u,
            source: best.source,
            attained,
            partition,
            trace: best.trace,
        },
        flags,
        converged,
    })
}

/// Move `x` from a zero endpoint into the interval interior until the branch
/// utility is within `epsilon / 2` of the supremum.
#[allow(clippy::too_many_arguments)]
fn shift_inward(
    game: &GameDefinition,
    theta: &[f64],
    iv: &SignedInterval,
    x: f64,
    y: f64,
    sup: f64,
    config: &SolverConfig,
    params: &ContractionParams,
) -> Result<(f64, Vec<f64>, f64)> {
    let toward = if (x - iv.lo).abs() <= (iv.hi - x).abs() { 1.0 } else { -1.0 };
    let tol_zero = crate::middle::default_tol_zero(game, theta, config.grid_m);
    let mut t = 0.5 * config.epsilon.min(iv.width());
    let z0 = game.z_box().midpoint();
    for _ in 0..200 {
        let xs = (x + toward * t).clamp(iv.lo, iv.hi);
        let (z, u) = branch_utility(game, xs, y, theta, &z0, params)?;
        let interior = !br_insider(game, xs, theta, tol_zero).is_set_valued();
        if interior && u >= sup - 0.5 * config.epsilon {
            return Ok((xs, z, u));
        }
        t *= 0.5;
    }
    Err(Error::NonConvergence {
        what: "epsilon shift off a zero endpoint",
        iterations: 200,
        residual: t,
    })
}

/// Full outer loop over the deception set. Parameters are solved in parallel
/// and reduced in list order, so ties go to the earlier parameter.
pub fn solve_dse(game: &GameDefinition, config: &SolverConfig) -> Result<EquilibriumResult> {
    config.validate()?;
    if game.theta_set().is_empty() {
        return Err(Error::InvalidGame("deception set is empty".into()));
    }
    let params = ContractionParams::for_game(game);
    let outcomes: Vec<ThetaOutcome> = game
        .theta_set()
        .par_iter()
        .enumerate()
        .map(|(i, theta)| solve_theta(game, i, theta, config, &params))
        .collect::<Result<_>>()?;

    let mut star = 0;
    for (i, o) in outcomes.iter().enumerate().skip(1) {
        if o.summary.utility > outcomes[star].summary.utility + config.tie_tol {
            star = i;
        }
    }
    let mut flags: Vec<Flag> = outcomes.iter().flat_map(|o| o.flags.clone()).collect();
    if let Some(y) = config.freeze_y {
        flags.push(Flag::FrozenInsider { y });
    }
    let converged = outcomes.iter().all(|o| o.converged);
    let win = &outcomes[star];
    let kind = if config.epsilon > 0.0 {
        EquilibriumKind::EpsWdse
    } else {
        match config.mode {
            TieBreak::Weak => EquilibriumKind::Wdse,
            TieBreak::Strong => EquilibriumKind::Sdse,
        }
    };
    let s = &win.summary;
    Ok(EquilibriumResult {
        kind,
        x_star: s.x,
        y_star: s.y,
        z_star: s.z.clone(),
        theta_star: s.theta.clone(),
        theta_index: star,
        utility: s.utility,
        iterations: s.trace.len(),
        converged,
        trace: s.trace.clone(),
        flags,
        per_theta: outcomes.into_iter().map(|o| o.summary).collect(),
    })
}

impl EquilibriumResult {
    /// Whether the reported point is an actual maximizer (not just a supremum).
    pub fn attained(&self) -> bool {
        !self.flags.iter().any(|f| {
            matches!(f, Flag::SupremumNotAttained { theta_index, .. } if *theta_index == self.theta_index)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::middle::Sign;
    use crate::scenarios;

    fn robustness() -> GameDefinition {
        scenarios::build_toy("robustness").unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            alpha_exponent: 0.4,
            sigma_exponent: 0.5,
            y_grid: 1,
            ..Default::default()
        };
        let errs = bad.validation_errors();
        assert_eq!(errs.len(), 3);
        assert!(errs[0].contains("(0.5, 1]"));
        let c = SolverConfig::default();
        assert_eq!(c.alpha(1), 1.0);
        assert_eq!(c.sigma(1), 0.5);
    }

    #[test]
    fn hypergradient_examples() {
        let g = robustness();
        let h = hypergradient(&g, -0.6, 2.0, &[0.8], &[-4.0 / 3.0]);
        assert!(h.abs() < 1e-12);
        assert_eq!(hypergradient(&g, 1.0, 2.0, &[0.0], &[0.0]), 0.0);
        assert_eq!(hypergradient(&g, 0.3, 2.0, &[0.5], &[0.0]), g.leader_grad_x(0.3, 2.0, &[0.5]));
    }

    #[test]
    fn ascent_on_robustness_intervals() {
        let g = robustness();
        let p = ContractionParams::for_game(&g);
        let iv = SignedInterval {
            lo: -2.0,
            hi: 2.0,
            sign: Sign::Positive,
        };
        let cfg = SolverConfig {
            x_inits: vec![0.5],
            ..Default::default()
        };
        let a = ascend_interval(&g, &[-4.0 / 3.0], &iv, &cfg, &p).unwrap();
        assert!((a.x + 0.6).abs() < 1e-4, "{}", a.x);
        assert!((a.utility - 21.0).abs() < 1e-6);
        assert!(a.converged);
        let ks: Vec<usize> = a.trace.iter().map(|t| t.k).collect();
        assert!(ks.windows(2).all(|w| w[1] > w[0]));

        let a = ascend_interval(&g, &[0.0], &iv, &cfg, &p).unwrap();
        assert!((a.x - 1.0).abs() < 1e-4);
        assert!((a.utility - 21.0).abs() < 1e-6);
    }

    #[test]
    fn ascent_on_nonexistence_branch() {
        let g = scenarios::build_toy("nonexistence").unwrap();
        let p = ContractionParams::for_game(&g);
        let iv = SignedInterval {
            lo: 0.0,
            hi: 1.0,
            sign: Sign::Positive,
        };
        let a = ascend_interval(&g, &[0.0], &iv, &SolverConfig::default(), &p).unwrap();
        assert!((a.x - 0.25).abs() < 1e-5);
        assert!((a.utility - 0.125).abs() < 1e-9);
    }

    #[test]
    fn zero_point_examples() {
        let g = scenarios::build_toy("nonexistence").unwrap();
        let p = ContractionParams::for_game(&g);
        let weak = SolverConfig::default();
        let strong = SolverConfig {
            mode: TieBreak::Strong,
            ..Default::default()
        };
        let at = |x: f64, c: &SolverConfig| {
            zero_point_utility(&g, &ZeroPoint::Resolved { x }, &[0.0], c, &p).unwrap().value
        };
        assert!((at(1.0, &weak) + 1.0).abs() < 1e-12);
        assert!((at(1.0, &strong) - 1.0).abs() < 1e-12);
        assert!((at(2.0, &weak) + 6.0).abs() < 1e-12);
        assert!((at(2.0, &strong) + 2.0).abs() < 1e-12);
        // robustness utility ignores y: both tie-breaks agree
        let r = robustness();
        let pr = ContractionParams::for_game(&r);
        let w = zero_point_utility(&r, &ZeroPoint::Resolved { x: 0.5 }, &[0.0], &weak, &pr).unwrap();
        let s = zero_point_utility(&r, &ZeroPoint::Resolved { x: 0.5 }, &[0.0], &strong, &pr).unwrap();
        assert!((w.value - s.value).abs() < 1e-12);
    }

    #[test]
    fn robustness_dse_prefers_first_theta() {
        let g = robustness();
        let r = solve_dse(&g, &SolverConfig::default()).unwrap();
        assert_eq!(r.kind, EquilibriumKind::Wdse);
        assert_eq!(r.theta_index, 0);
        assert!((r.x_star - 1.0).abs() < 1e-3);
        assert!((r.utility - 21.0).abs() < 1e-4);
        let second = &r.per_theta[1];
        assert!((second.x + 0.6).abs() < 1e-3);
        assert!((second.z[0] - 0.8).abs() < 1e-3);
        assert_eq!(r.iterations, r.trace.len());
        let u = g.evaluate_leader_utility(r.x_star, r.y_star, &r.z_star).unwrap();
        assert!((u - r.utility).abs() <= 1e-10);
    }

    #[test]
    fn nonexistence_weak_flags_and_eps_mode() {
        let g = scenarios::build_toy("nonexistence").unwrap();
        let r = solve_dse(&g, &SolverConfig::default()).unwrap();
        assert!(!r.attained());
        assert!((r.utility - 1.0).abs() < 1e-6);
        let eps = SolverConfig {
            epsilon: 0.01,
            ..Default::default()
        };
        let r = solve_dse(&g, &eps).unwrap();
        assert_eq!(r.kind, EquilibriumKind::EpsWdse);
        assert!(r.utility >= 0.99);
        assert!(r.x_star > 1.0 && r.x_star <= 1.0 + 0.01);
        assert_eq!(br_insider(&g, r.x_star, &[0.0], 1e-12), BrResult::Point(-1.0));
        let strong = SolverConfig {
            mode: TieBreak::Strong,
            ..Default::default()
        };
        let r = solve_dse(&g, &strong).unwrap();
        assert_eq!(r.kind, EquilibriumKind::Sdse);
        assert!(r.attained());
        assert!((r.x_star - 1.0).abs() < 1e-9 && (r.utility - 1.0).abs() < 1e-9);
    }
}
