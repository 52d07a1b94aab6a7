//! The insider's best response and the sign partition of the leader domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::GameDefinition;

pub const DEFAULT_GRID_M: usize = 1024;
pub const DEFAULT_ZERO_WIDTH: f64 = 1e-8;
pub const MAX_ZEROS: usize = 64;

const RELATIVE_TOL_ZERO: f64 = 1e-10;
const GOLDEN_ITERATIONS: usize = 200;

/// `BR_Y(x, theta)`: the insider utility is linear in `y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrResult {
    Point(f64),
    Interval(f64, f64),
}

impl BrResult {
    pub fn contains(&self, y: f64, tol: f64) -> bool {
        match *self {
            BrResult::Point(p) => (y - p).abs() <= tol,
            BrResult::Interval(lo, hi) => y >= lo - tol && y <= hi + tol,
        }
    }

    pub fn is_set_valued(&self) -> bool {
        matches!(self, BrResult::Interval(..))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    /// Insider response on the interior of an interval with this sign.
    pub fn insider_response(self, game: &GameDefinition) -> f64 {
        let (lo, hi) = game.y_range();
        match self {
            Sign::Positive => hi,
            Sign::Negative => lo,
        }
    }
}

/// A closed sub-interval of the leader domain on whose interior `f2` keeps one sign.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedInterval {
    pub lo: f64,
    pub hi: f64,
    pub sign: Sign,
}

impl SignedInterval {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ZeroPoint {
    Resolved { x: f64 },
    Gap { lo: f64, hi: f64 },
}

impl ZeroPoint {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            ZeroPoint::Resolved { x } => (x, x),
            ZeroPoint::Gap { lo, hi } => (lo, hi),
        }
    }

    pub fn width(&self) -> f64 {
        let (lo, hi) = self.bounds();
        hi - lo
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionResult {
    pub theta: Vec<f64>,
    pub zeros: Vec<ZeroPoint>,
    pub intervals: Vec<SignedInterval>,
    pub gap_width: f64,
    pub tol_zero: f64,
}

/// `1e-10` times the largest `|f2|` on a uniform grid of `grid_m + 1` points.
pub fn default_tol_zero(game: &GameDefinition, theta: &[f64], grid_m: usize) -> f64 {
    let (lo, hi) = game.x_range();
    let m = grid_m.max(1);
    let scale = (0..=m)
        .map(|k| game.insider_slope(lo + (hi - lo) * k as f64 / m as f64, theta).abs())
        .fold(0.0, f64::max);
    RELATIVE_TOL_ZERO * scale.max(f64::MIN_POSITIVE)
}

pub fn br_insider(game: &GameDefinition, x: f64, theta: &[f64], tol_zero: f64) -> BrResult {
    let (lo, hi) = game.y_range();
    let f2 = game.insider_slope(x, theta);
    if f2 > tol_zero {
        BrResult::Point(hi)
    } else if f2 < -tol_zero {
        BrResult::Point(lo)
    } else {
        BrResult::Interval(lo, hi)
    }
}

fn sign_of(v: f64, tol: f64) -> i8 {
    if v > tol {
        1
    } else if v < -tol {
        -1
    } else {
        0
    }
}

/// Bisect a sign-change bracket `[a, b]` until it is at most `width` wide, or
/// down to machine resolution when `resolve` is set.
fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, width: f64, resolve: bool) -> (f64, f64) {
    let fa = f(a);
    loop {
        if !resolve && b - a <= width {
            return (a, b);
        }
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            return (a, b);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return (mid, mid);
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = mid;
        } else {
            b = mid;
        }
    }
}

/// Golden-section minimization of `g` on `[a, b]`.
pub(crate) fn golden_min(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut gc = g(c);
    let mut gd = g(d);
    for _ in 0..GOLDEN_ITERATIONS {
        if b - a <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if gc <= gd {
            b = d;
            d = c;
            gd = gc;
            c = b - r * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + r * (b - a);
            gd = g(d);
        }
    }
    if gc <= gd {
        (c, gc)
    } else {
        (d, gd)
    }
}

/// Zeros and sign intervals of `f2(., theta)` on the leader domain.
///
/// Sign changes on a uniform grid are bisected to `zero_width`; brackets that
/// reach `1e-8 |Omega_x|` are reported as resolved zeros, wider ones as gaps.
/// Grid points where `|f2| <= tol_zero` without a sign change are refined by
/// minimizing `|f2|` (touching zeros). Zeros on the domain boundary are
/// interval endpoints and are not reported.
pub fn partition_leader_domain(
    game: &GameDefinition,
    theta: &[f64],
    grid_m: usize,
    zero_width: f64,
) -> Result<PartitionResult> {
    if grid_m < 2 {
        return Err(Error::Config(format!("partition grid needs at least 2 cells, got {grid_m}")));
    }
    if !(zero_width > 0.0) {
        return Err(Error::Config(format!("zero width must be positive, got {zero_width}")));
    }
    let (lo, hi) = game.x_range();
    let f = |x: f64| game.insider_slope(x, theta);
    let tol = default_tol_zero(game, theta, grid_m);
    let resolve_width = 1e-8 * (hi - lo).max(f64::MIN_POSITIVE);
    let resolve = zero_width <= resolve_width;
    let xs: Vec<f64> = (0..=grid_m)
        .map(|k| if k == grid_m { hi } else { lo + (hi - lo) * k as f64 / grid_m as f64 })
        .collect();
    let signs: Vec<i8> = xs.iter().map(|&x| sign_of(f(x), tol)).collect();

    let mut zeros = Vec::new();
    let mut k = 0;
    // last grid index with a nonzero sign
    let mut last: Option<usize> = None;
    while k <= grid_m {
        if signs[k] == 0 {
            // run of near-zero grid points
            let start = k;
            while k <= grid_m && signs[k] == 0 {
                k += 1;
            }
            let end = k - 1;
            let touches_boundary = start == 0 || end == grid_m;
            let left = last.map(|i| signs[i]);
            let right = if k <= grid_m { Some(signs[k]) } else { None };
            if !touches_boundary && left == right {
                // touching zero: no sign change across the run
                let a = xs[start - 1];
                let b = xs[end + 1];
                let (xz, v) = golden_min(|x| f(x).abs(), a, b);
                if v <= tol {
                    zeros.push(ZeroPoint::Resolved { x: xz });
                }
            }
            continue;
        }
        if let Some(i) = last {
            if signs[i] != signs[k] {
                let (a, b) = bisect(f, xs[i], xs[k], zero_width, resolve);
                if b - a <= resolve_width {
                    zeros.push(ZeroPoint::Resolved { x: 0.5 * (a + b) });
                } else {
                    zeros.push(ZeroPoint::Gap { lo: a, hi: b });
                }
            }
        }
        last = Some(k);
        k += 1;
        if zeros.len() > MAX_ZEROS {
            return Err(Error::Config(format!(
                "f2 changes sign more than {MAX_ZEROS} times on the grid; the finite-zero assumption fails at this resolution"
            )));
        }
    }
    zeros.sort_by(|a, b| a.bounds().0.total_cmp(&b.bounds().0));
    assemble(game, theta, zeros, tol)
}

fn assemble(game: &GameDefinition, theta: &[f64], zeros: Vec<ZeroPoint>, tol: f64) -> Result<PartitionResult> {
    let (lo, hi) = game.x_range();
    let mut cuts = vec![(lo, lo)];
    cuts.extend(zeros.iter().map(|z| z.bounds()));
    cuts.push((hi, hi));
    let mut intervals = Vec::with_capacity(cuts.len() - 1);
    for w in cuts.windows(2) {
        let (a, b) = (w[0].1, w[1].0);
        if b < a {
            return Err(Error::Config(format!("overlapping zero brackets around [{a}, {b}]")));
        }
        let mid = game.insider_slope(0.5 * (a + b), theta);
        let sign = match sign_of(mid, tol) {
            1 => Sign::Positive,
            -1 => Sign::Negative,
            _ => {
                return Err(Error::InvalidGame(format!(
                    "f2 vanishes at the midpoint of [{a}, {b}]; zeros are not isolated"
                )))
            }
        };
        intervals.push(SignedInterval { lo: a, hi: b, sign });
    }
    let gap_width = zeros
        .iter()
        .filter(|z| matches!(z, ZeroPoint::Gap { .. }))
        .map(|z| z.width())
        .fold(0.0, f64::max);
    Ok(PartitionResult {
        theta: theta.to_vec(),
        zeros,
        intervals,
        gap_width,
        tol_zero: tol,
    })
}

impl PartitionResult {
    /// Partition in which the zeros inside the given brackets are replaced by
    /// those brackets. Every bracket must contain a zero.
    pub fn with_gaps(game: &GameDefinition, theta: &[f64], gaps: &[(f64, f64)]) -> Result<Self> {
        let base = partition_leader_domain(game, theta, DEFAULT_GRID_M, DEFAULT_ZERO_WIDTH)?;
        let (lo, hi) = game.x_range();
        let mut zeros: Vec<ZeroPoint> = Vec::new();
        for &(a, b) in gaps {
            if !(a < b && a > lo && b < hi) {
                return Err(Error::Config(format!(
                    "gap [{a}, {b}] must be a nonempty bracket inside ({lo}, {hi})"
                )));
            }
            if !base.zeros.iter().any(|z| {
                let (p, q) = z.bounds();
                p >= a && q <= b
            }) {
                return Err(Error::Config(format!("gap [{a}, {b}] contains no zero of f2")));
            }
            zeros.push(ZeroPoint::Gap { lo: a, hi: b });
        }
        for z in &base.zeros {
            let (p, q) = z.bounds();
            if !gaps.iter().any(|&(a, b)| p >= a && q <= b) {
                zeros.push(*z);
            }
        }
        zeros.sort_by(|a, b| a.bounds().0.total_cmp(&b.bounds().0));
        assemble(game, theta, zeros, base.tol_zero)
    }

    /// Index of the interval containing `x` in its interior, if any.
    pub fn interval_of(&self, x: f64) -> Option<usize> {
        self.intervals.iter().position(|iv| x > iv.lo && x < iv.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    #[test]
    fn br_examples() {
        let g = scenarios::build_toy("nonexistence").unwrap();
        let t = default_tol_zero(&g, &[0.0], DEFAULT_GRID_M);
        assert_eq!(br_insider(&g, 0.5, &[0.0], t), BrResult::Point(1.0));
        assert_eq!(br_insider(&g, 1.5, &[0.0], t), BrResult::Point(-1.0));
        assert_eq!(br_insider(&g, 1.0, &[0.0], t), BrResult::Interval(-1.0, 1.0));
    }

    #[test]
    fn nonexistence_partition() {
        let g = scenarios::build_toy("nonexistence").unwrap();
        let p = partition_leader_domain(&g, &[0.0], DEFAULT_GRID_M, DEFAULT_ZERO_WIDTH).unwrap();
        assert_eq!(p.zeros.len(), 2);
        let xs: Vec<f64> = p.zeros.iter().map(|z| z.bounds().0).collect();
        assert!((xs[0] - 1.0).abs() < 1e-12 && (xs[1] - 2.0).abs() < 1e-12);
        let tags: Vec<Sign> = p.intervals.iter().map(|i| i.sign).collect();
        assert_eq!(tags, vec![Sign::Positive, Sign::Negative, Sign::Positive]);
        assert_eq!(p.gap_width, 0.0);
    }

    #[test]
    fn microgrid_partition() {
        let g = scenarios::build_by_name("microgrid").unwrap();
        let p = partition_leader_domain(&g, &[1.0], DEFAULT_GRID_M, DEFAULT_ZERO_WIDTH).unwrap();
        assert_eq!(p.zeros.len(), 1);
        assert!((p.zeros[0].bounds().0 - 3.0).abs() < 1e-9);
        assert_eq!(p.intervals[0].sign, Sign::Positive);
        assert_eq!(p.intervals[1].sign, Sign::Negative);

        let gp = PartitionResult::with_gaps(&g, &[1.0], &[(2.8, 3.1)]).unwrap();
        assert_eq!(gp.zeros, vec![ZeroPoint::Gap { lo: 2.8, hi: 3.1 }]);
        assert!((gp.gap_width - 0.3).abs() < 1e-12);
        assert_eq!(gp.intervals[0].hi, 2.8);
        assert_eq!(gp.intervals[1].lo, 3.1);
        assert!(PartitionResult::with_gaps(&g, &[1.0], &[(1.0, 2.0)]).is_err());
    }

    #[test]
    fn wireless_boundary_zero_is_an_endpoint() {
        let g = scenarios::build_by_name("wireless").unwrap();
        let p = partition_leader_domain(&g, &[1.0], DEFAULT_GRID_M, DEFAULT_ZERO_WIDTH).unwrap();
        assert!(p.zeros.is_empty());
        assert_eq!(p.intervals.len(), 1);
        assert_eq!(p.intervals[0].sign, Sign::Positive);
    }

    #[test]
    fn wide_zero_width_gives_gaps() {
        let g = scenarios::build_toy("nonexistence").unwrap();
        let p = partition_leader_domain(&g, &[0.0], 16, 0.05).unwrap();
        assert_eq!(p.zeros.len(), 2);
        for z in &p.zeros {
            assert!(matches!(z, ZeroPoint::Gap { .. }));
            let (a, b) = z.bounds();
            assert!(b - a <= 0.05);
        }
        assert!(p.gap_width > 0.0 && p.gap_width <= 0.05);
        assert!(partition_leader_domain(&g, &[0.0], 1, 0.05).is_err());
        assert!(partition_leader_domain(&g, &[0.0], 16, 0.0).is_err());
    }

    #[test]
    fn golden_finds_vertex() {
        let (x, v) = golden_min(|x| (x - 0.3).powi(2), 0.0, 1.0);
        assert!((x - 0.3).abs() < 1e-7 && v < 1e-14);
    }
}
